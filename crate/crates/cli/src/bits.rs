//! Input parsing and output formatting for `tgh run`.
//!
//! A `0x`/`0b` literal is one integer whose bit `i` drives input wire `i`.
//! `--values` takes one decimal (or `0x`) number per input group.

use anyhow::{bail, Context, Result};
use tgh_core::circuit::bits;

/// Bits of a `0x…` or `0b…` literal, least significant first, padded or
/// checked against `width`.
pub fn parse_literal(s: &str, width: usize) -> Result<Vec<bool>> {
    let s = s.trim().replace('_', "");
    let mut out: Vec<bool> = if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))
    {
        let padded = if h.len() % 2 == 1 {
            format!("0{h}")
        } else {
            h.to_string()
        };
        let bytes = hex::decode(&padded).with_context(|| format!("`{s}` is not a hex literal"))?;
        bytes
            .iter()
            .rev()
            .flat_map(|b| (0..8).map(move |i| (b >> i) & 1 == 1))
            .collect()
    } else if let Some(b) = s.strip_prefix("0b").or_else(|| s.strip_prefix("0B")) {
        b.chars()
            .rev()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => bail!("`{c}` is not a binary digit"),
            })
            .collect::<Result<_>>()?
    } else {
        bail!("input literal `{s}` needs a 0x or 0b prefix");
    };
    if out.iter().skip(width).any(|&b| b) {
        bail!("input literal `{s}` has more than {width} significant bits");
    }
    out.resize(width, false);
    Ok(out)
}

fn parse_u64(s: &str) -> Result<u64> {
    let s = s.trim();
    match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16),
        None => s.parse(),
    }
    .with_context(|| format!("`{s}` is not a number"))
}

/// One value per group, `a,b,…`.
pub fn parse_values(s: &str, groups: &[usize]) -> Result<Vec<bool>> {
    let values: Vec<u64> = if s.trim().is_empty() {
        vec![]
    } else {
        s.split(',').map(parse_u64).collect::<Result<_>>()?
    };
    if values.len() != groups.len() {
        bail!(
            "circuit has {} input groups, got {} values",
            groups.len(),
            values.len()
        );
    }
    for (i, (&v, &w)) in values.iter().zip(groups).enumerate() {
        if w < 64 && v >> w != 0 {
            bail!("value {v} does not fit input group {i} ({w} bits)");
        }
    }
    Ok(bits::pack(
        &values
            .iter()
            .copied()
            .zip(groups.iter().copied())
            .collect::<Vec<_>>(),
    ))
}

/// A group as decimal, or as a hex literal when wider than 64 bits.
pub fn format_group(group: &[bool]) -> String {
    if group.len() <= 64 {
        return bits::to_u64(group).to_string();
    }
    let bytes: Vec<u8> = group
        .chunks(8)
        .rev()
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i))
        })
        .collect();
    format!("0x{}", hex::encode(bytes))
}

pub fn format_groups(bits: &[bool], groups: &[usize]) -> Vec<String> {
    let mut offset = 0;
    groups
        .iter()
        .map(|&w| {
            let s = format_group(&bits[offset..offset + w]);
            offset += w;
            s
        })
        .collect()
}

/// `0b…` literal, most significant (highest wire) first.
pub fn format_binary(bits: &[bool]) -> String {
    let body: String = bits
        .iter()
        .rev()
        .map(|&b| if b { '1' } else { '0' })
        .collect();
    format!("0b{body}")
}
