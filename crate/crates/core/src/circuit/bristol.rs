//! Bristol Fashion text format.
//!
//! ```text
//! <num_gates> <num_wires>
//! <num_input_values> <bits_0> <bits_1> ...
//! <num_output_values> <bits_0> ...
//! <n_in> <n_out> <in_wires...> <out_wire> <AND|XOR|INV>
//! ```
//!
//! Tokens are whitespace separated, blank lines are skipped and CRLF is
//! accepted. Serialization is canonical (single spaces, LF, no blank lines);
//! circuit digests are taken over that form.

use std::fmt;

use thiserror::Error;

use super::{Circuit, CircuitError, Gate, GateKind, WireId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected end of input, expected {0}")]
    UnexpectedEof(&'static str),
    #[error("expected {expected}, found `{found}`")]
    Expected {
        expected: &'static str,
        found: String,
    },
    #[error("unknown gate kind `{0}`")]
    UnknownGate(String),
    #[error(
        "{kind} gate takes {expected_in} inputs and 1 output, line declares {n_in} and {n_out}"
    )]
    Arity {
        kind: GateKind,
        expected_in: usize,
        n_in: usize,
        n_out: usize,
    },
    #[error("trailing token `{0}`")]
    Trailing(String),
    #[error(transparent)]
    Invalid(#[from] CircuitError),
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

/// One physical line split into tokens with positions (1-based).
fn tokenize_line(line_no: usize, line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line
        .char_indices()
        .chain(std::iter::once((line.len(), ' ')))
    {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Token {
                    text: &line[s..i],
                    line: line_no,
                    column: s + 1,
                });
                start = None;
            }
            _ => {}
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last_line: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank line as tokens.
    fn next_tokens(&mut self, what: &'static str) -> Result<Vec<Token<'a>>, ParseError> {
        for (i, line) in self.inner.by_ref() {
            self.last_line = i + 1;
            let toks = tokenize_line(i + 1, line);
            if !toks.is_empty() {
                return Ok(toks);
            }
        }
        Err(ParseError {
            line: self.last_line + 1,
            column: 1,
            kind: ParseErrorKind::UnexpectedEof(what),
        })
    }
}

struct Cursor<'a> {
    toks: std::vec::IntoIter<Token<'a>>,
    line: usize,
    end_column: usize,
}

impl<'a> Cursor<'a> {
    fn new(toks: Vec<Token<'a>>) -> Self {
        let line = toks.first().map_or(0, |t| t.line);
        let end_column = toks.last().map_or(1, |t| t.column + t.text.len());
        Cursor {
            toks: toks.into_iter(),
            line,
            end_column,
        }
    }

    fn next(&mut self, what: &'static str) -> Result<Token<'a>, ParseError> {
        self.toks.next().ok_or(ParseError {
            line: self.line,
            column: self.end_column,
            kind: ParseErrorKind::UnexpectedEof(what),
        })
    }

    fn usize(&mut self, what: &'static str) -> Result<(usize, Token<'a>), ParseError> {
        let tok = self.next(what)?;
        match tok.text.parse::<usize>() {
            Ok(v) => Ok((v, tok)),
            Err(_) => Err(err_at(
                &tok,
                ParseErrorKind::Expected {
                    expected: what,
                    found: tok.text.into(),
                },
            )),
        }
    }

    fn finish(mut self) -> Result<(), ParseError> {
        match self.toks.next() {
            Some(tok) => Err(err_at(&tok, ParseErrorKind::Trailing(tok.text.into()))),
            None => Ok(()),
        }
    }
}

fn err_at(tok: &Token<'_>, kind: ParseErrorKind) -> ParseError {
    ParseError {
        line: tok.line,
        column: tok.column,
        kind,
    }
}

fn parse_groups(cur: &mut Cursor<'_>) -> Result<Vec<usize>, ParseError> {
    let (n, _) = cur.usize("value count")?;
    (0..n)
        .map(|_| cur.usize("value bit width").map(|(v, _)| v))
        .collect()
}

/// Parses Bristol Fashion text and validates the resulting circuit.
pub fn parse_bristol(text: &str) -> Result<Circuit, ParseError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last_line: 0,
    };

    let mut header = Cursor::new(lines.next_tokens("header `<num_gates> <num_wires>`")?);
    let header_line = header.line;
    let (num_gates, _) = header.usize("gate count")?;
    let (num_wires, _) = header.usize("wire count")?;
    header.finish()?;

    let mut cur = Cursor::new(lines.next_tokens("input value widths")?);
    let input_groups = parse_groups(&mut cur)?;
    cur.finish()?;
    let mut cur = Cursor::new(lines.next_tokens("output value widths")?);
    let output_groups = parse_groups(&mut cur)?;
    cur.finish()?;

    let mut gates = Vec::with_capacity(num_gates.min(1 << 24));
    let mut gate_lines = Vec::with_capacity(gates.capacity());
    for _ in 0..num_gates {
        let mut cur = Cursor::new(lines.next_tokens("gate line")?);
        gate_lines.push(cur.line);
        let (n_in, _) = cur.usize("gate input count")?;
        let (n_out, _) = cur.usize("gate output count")?;
        let mut wires = Vec::with_capacity(n_in + n_out);
        for _ in 0..n_in + n_out {
            let (w, tok) = cur.usize("wire index")?;
            let w = u32::try_from(w).map_err(|_| {
                err_at(
                    &tok,
                    ParseErrorKind::Expected {
                        expected: "wire index",
                        found: tok.text.into(),
                    },
                )
            })?;
            wires.push(WireId(w));
        }
        let tok = cur.next("gate kind")?;
        let kind = match tok.text {
            "AND" => GateKind::And,
            "XOR" => GateKind::Xor,
            "INV" | "NOT" => GateKind::Inv,
            other => return Err(err_at(&tok, ParseErrorKind::UnknownGate(other.into()))),
        };
        if n_in != kind.arity() || n_out != 1 {
            return Err(err_at(
                &tok,
                ParseErrorKind::Arity {
                    kind,
                    expected_in: kind.arity(),
                    n_in,
                    n_out,
                },
            ));
        }
        cur.finish()?;
        gates.push(match kind {
            GateKind::And => Gate::And {
                a: wires[0],
                b: wires[1],
                out: wires[2],
            },
            GateKind::Xor => Gate::Xor {
                a: wires[0],
                b: wires[1],
                out: wires[2],
            },
            GateKind::Inv => Gate::Inv {
                a: wires[0],
                out: wires[1],
            },
        });
    }
    if let Ok(toks) = lines.next_tokens("") {
        let tok = &toks[0];
        return Err(err_at(tok, ParseErrorKind::Trailing(tok.text.into())));
    }

    Circuit::new("", num_wires, gates, input_groups, output_groups).map_err(|e| {
        let line = match &e {
            CircuitError::WireOutOfRange { gate, .. }
            | CircuitError::NotTopological { gate, .. }
            | CircuitError::Reassigned { gate, .. } => {
                gate_lines.get(*gate).copied().unwrap_or(header_line)
            }
            _ => header_line,
        };
        ParseError {
            line,
            column: 1,
            kind: e.into(),
        }
    })
}

/// Canonical Bristol text for `circuit`.
pub fn serialize_bristol(circuit: &Circuit) -> String {
    let mut out = String::with_capacity(16 + circuit.gates().len() * 20);
    write_bristol(circuit, &mut out).expect("writing to a String cannot fail");
    out
}

fn write_groups(groups: &[usize], out: &mut impl fmt::Write) -> fmt::Result {
    write!(out, "{}", groups.len())?;
    for g in groups {
        write!(out, " {g}")?;
    }
    out.write_char('\n')
}

fn write_bristol(circuit: &Circuit, out: &mut impl fmt::Write) -> fmt::Result {
    writeln!(out, "{} {}", circuit.gates().len(), circuit.num_wires())?;
    write_groups(circuit.input_groups(), out)?;
    write_groups(circuit.output_groups(), out)?;
    for gate in circuit.gates() {
        match *gate {
            Gate::And { a, b, out: o } => writeln!(out, "2 1 {a} {b} {o} AND")?,
            Gate::Xor { a, b, out: o } => writeln!(out, "2 1 {a} {b} {o} XOR")?,
            Gate::Inv { a, out: o } => writeln!(out, "1 1 {a} {o} INV")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const AND1: &str = "1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n";

    #[test]
    fn minimal_and_circuit() {
        let c = parse_bristol(AND1).unwrap();
        assert_eq!(c.num_wires(), 3);
        assert_eq!(
            c.gates(),
            &[Gate::And {
                a: WireId(0),
                b: WireId(1),
                out: WireId(2)
            }]
        );
        assert_eq!(
            c.input_wires().collect::<Vec<_>>(),
            vec![WireId(0), WireId(1)]
        );
        assert_eq!(c.output_wires().collect::<Vec<_>>(), vec![WireId(2)]);
        assert_eq!(serialize_bristol(&c), AND1);
    }

    #[test]
    fn tolerates_crlf_blank_lines_and_extra_spaces() {
        let text = "1   3\r\n2 1 1\r\n1 1\r\n\r\n  2 1 0 1 2 AND  \r\n\r\n";
        let c = parse_bristol(text).unwrap();
        assert_eq!(serialize_bristol(&c), AND1);
    }

    #[test]
    fn unknown_gate_is_named() {
        let err = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 NAND\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownGate("NAND".into()));
        assert_eq!((err.line, err.column), (4, 11));
        assert!(err.to_string().contains("NAND"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_bristol("1 x\n").unwrap_err();
        assert_eq!((err.line, err.column), (1, 3));
        let err = parse_bristol("1 3\n2 1 1\n1 1\n").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnexpectedEof(_)));
        let err = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND extra\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Trailing("extra".into()));
        let err = parse_bristol("1 3\n2 1 1\n1 1\n1 1 0 2 AND\n").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Arity { .. }));
    }

    #[test]
    fn topological_violation_points_at_gate_line() {
        let text = "2 4\n2 1 1\n1 1\n2 1 0 3 2 XOR\n2 1 0 1 3 AND\n";
        let err = parse_bristol(text).unwrap_err();
        assert_eq!(err.line, 4);
        assert!(matches!(
            err.kind,
            ParseErrorKind::Invalid(CircuitError::NotTopological { .. })
        ));
    }

    #[test]
    fn wire_count_mismatch() {
        let err = parse_bristol("1 4\n2 1 1\n1 1\n2 1 0 1 2 AND\n").unwrap_err();
        assert!(matches!(
            err.kind,
            ParseErrorKind::Invalid(CircuitError::WireCountMismatch { .. })
        ));
    }

    #[test]
    fn inv_gates() {
        let c = parse_bristol("2 3\n1 1\n1 1\n1 1 0 1 INV\n1 1 1 2 INV\n").unwrap();
        assert_eq!(c.eval_plaintext(&[true]).unwrap(), vec![true]);
        assert_eq!(c.stats().inv_count, 2);
    }
}
