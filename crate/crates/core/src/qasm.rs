//! Parser and emitter for the OpenQASM 2.0 subset used by the workbench.
//!
//! Accepted grammar, one statement per `;`:
//!
//! ```text
//! program   := header? include? qreg creg? stmt*
//! header    := "OPENQASM" "2.0" ";"
//! include   := "include" "\"qelib1.inc\"" ";"
//! qreg      := "qreg" "q" "[" int "]" ";"
//! creg      := "creg" "c" "[" int "]" ";"
//! stmt      := name ("(" angle ")")? qubit ("," qubit)? ";"
//!            | "measure" qubit "->" "c" "[" int "]" ";"
//! qubit     := "q" "[" int "]"
//! angle     := "-"? (number | "pi" | number "*" "pi" | "pi" "*" number) ("/" number)?
//! ```
//!
//! `//` comments and blank lines are ignored. Measurements must follow every
//! unitary gate.

use std::fmt::Write as _;

use crate::circuit::{Circuit, GateApplication, GateKind};
use crate::gateset::GateSetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownGate,
    ArityMismatch,
    IndexOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {kind:?}: {message}")]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub message: String,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmitError {
    #[error("gate `{gate}` (op {index}) is not native to dialect `{dialect}`")]
    ForeignGate {
        index: usize,
        gate: GateKind,
        dialect: String,
    },
    #[error(transparent)]
    Invalid(#[from] crate::circuit::CircuitError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64, String),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Arrow,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(_, raw) => format!("`{raw}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn err(line: usize, column: usize, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        message: message.into(),
        kind,
    }
}

fn lex(source: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let (mut last_line, mut last_col) = (1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                advance(1, &mut i, &mut col);
                continue;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(1, &mut i, &mut col);
                }
                continue;
            }
            _ => {}
        }
        let tok = match c {
            '(' => {
                advance(1, &mut i, &mut col);
                Tok::LParen
            }
            ')' => {
                advance(1, &mut i, &mut col);
                Tok::RParen
            }
            '[' => {
                advance(1, &mut i, &mut col);
                Tok::LBracket
            }
            ']' => {
                advance(1, &mut i, &mut col);
                Tok::RBracket
            }
            ',' => {
                advance(1, &mut i, &mut col);
                Tok::Comma
            }
            ';' => {
                advance(1, &mut i, &mut col);
                Tok::Semi
            }
            '*' => {
                advance(1, &mut i, &mut col);
                Tok::Star
            }
            '/' => {
                advance(1, &mut i, &mut col);
                Tok::Slash
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                advance(2, &mut i, &mut col);
                Tok::Arrow
            }
            '-' => {
                advance(1, &mut i, &mut col);
                Tok::Minus
            }
            '"' => {
                let mut s = String::new();
                advance(1, &mut i, &mut col);
                loop {
                    match chars.get(i) {
                        Some('"') => {
                            advance(1, &mut i, &mut col);
                            break;
                        }
                        Some('\n') | None => {
                            return Err(err(
                                start_line,
                                start_col,
                                ParseErrorKind::Syntax,
                                "unterminated string literal",
                            ))
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(1, &mut i, &mut col);
                        }
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    advance(1, &mut i, &mut col);
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        let n = j - i;
                        advance(n, &mut i, &mut col);
                    }
                }
                let raw: String = chars[start..i].iter().collect();
                let value: f64 = raw.parse().map_err(|_| {
                    err(
                        start_line,
                        start_col,
                        ParseErrorKind::Syntax,
                        format!("malformed number `{raw}`"),
                    )
                })?;
                Tok::Number(value, raw)
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    advance(1, &mut i, &mut col);
                }
                Tok::Ident(chars[start..i].iter().collect())
            }
            other => {
                return Err(err(
                    start_line,
                    start_col,
                    ParseErrorKind::Syntax,
                    format!("unexpected character `{other}`"),
                ))
            }
        };
        last_line = line;
        last_col = col;
        out.push(Spanned {
            tok,
            line: start_line,
            column: start_col,
        });
    }
    // Eof points just past the last token so it stays inside the text.
    out.push(Spanned {
        tok: Tok::Eof,
        line: last_line,
        column: last_col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, at: &Spanned, message: impl Into<String>) -> ParseError {
        err(at.line, at.column, ParseErrorKind::Syntax, message)
    }

    fn expect(&mut self, want: Tok) -> Result<Spanned, ParseError> {
        let t = self.next();
        if std::mem::discriminant(&t.tok) == std::mem::discriminant(&want) {
            Ok(t)
        } else {
            Err(self.syntax(
                &t,
                format!("expected {}, found {}", want.describe(), t.tok.describe()),
            ))
        }
    }

    fn expect_ident(&mut self, name: &str) -> Result<Spanned, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == name => Ok(t),
            other => Err(self.syntax(
                &t,
                format!("expected `{name}`, found {}", other.describe()),
            )),
        }
    }

    fn expect_uint(&mut self) -> Result<(usize, Spanned), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Number(v, raw) if raw.chars().all(|c| c.is_ascii_digit()) && *v < 1e9 => {
                Ok((*v as usize, t))
            }
            other => Err(self.syntax(
                &t,
                format!("expected a non-negative integer, found {}", other.describe()),
            )),
        }
    }

    /// `name[int]`, returning the index and the span of the index token.
    fn indexed(&mut self, name: &str) -> Result<(usize, Spanned), ParseError> {
        self.expect_ident(name)?;
        self.expect(Tok::LBracket)?;
        let idx = self.expect_uint()?;
        self.expect(Tok::RBracket)?;
        Ok(idx)
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Number(v, _) => Ok(*v),
            other => Err(self.syntax(&t, format!("expected a number, found {}", other.describe()))),
        }
    }

    fn is_pi(&self) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == "pi")
    }

    /// `-? (number | pi | number*pi | pi*number) (/ number)?`
    fn angle(&mut self) -> Result<f64, ParseError> {
        let mut sign = 1.0;
        if self.peek().tok == Tok::Minus {
            self.next();
            sign = -1.0;
        }
        let mut value = if self.is_pi() {
            self.next();
            if self.peek().tok == Tok::Star {
                self.next();
                std::f64::consts::PI * self.number()?
            } else {
                std::f64::consts::PI
            }
        } else {
            let n = self.number()?;
            if self.peek().tok == Tok::Star {
                self.next();
                if !self.is_pi() {
                    let t = self.peek().clone();
                    return Err(self.syntax(&t, "only `k*pi` products are supported"));
                }
                self.next();
                n * std::f64::consts::PI
            } else {
                n
            }
        };
        if self.peek().tok == Tok::Slash {
            self.next();
            let t = self.peek().clone();
            let d = self.number()?;
            if d == 0.0 {
                return Err(self.syntax(&t, "division by zero in angle"));
            }
            value /= d;
        }
        Ok(sign * value)
    }
}

/// Parses a QASM 2.0 program into a [`Circuit`].
pub fn parse(source: &str) -> Result<Circuit, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0 };
    let mut num_qubits: Option<usize> = None;
    let mut num_clbits: Option<usize> = None;
    let mut circuit = Circuit::new(1);
    let mut seen_header = false;
    let mut seen_include = false;
    let mut seen_measure = false;

    loop {
        let head = p.peek().clone();
        let word = match &head.tok {
            Tok::Eof => break,
            Tok::Ident(w) => w.clone(),
            other => {
                return Err(p.syntax(&head, format!("expected a statement, found {}", other.describe())))
            }
        };
        match word.as_str() {
            "OPENQASM" => {
                if seen_header || num_qubits.is_some() || seen_include {
                    return Err(p.syntax(&head, "OPENQASM header must come first"));
                }
                p.next();
                let t = p.next();
                match &t.tok {
                    Tok::Number(_, raw) if raw == "2.0" => {}
                    other => {
                        return Err(p.syntax(&t, format!("unsupported version {}", other.describe())))
                    }
                }
                p.expect(Tok::Semi)?;
                seen_header = true;
            }
            "include" => {
                if seen_include || num_qubits.is_some() {
                    return Err(p.syntax(&head, "include must precede register declarations"));
                }
                p.next();
                let t = p.next();
                match &t.tok {
                    Tok::Str(s) if s == "qelib1.inc" => {}
                    other => {
                        return Err(p.syntax(&t, format!("only \"qelib1.inc\" may be included, found {}", other.describe())))
                    }
                }
                p.expect(Tok::Semi)?;
                seen_include = true;
            }
            "qreg" => {
                if num_qubits.is_some() {
                    return Err(p.syntax(&head, "only one quantum register is supported"));
                }
                p.next();
                let name = p.peek().clone();
                if name.tok != Tok::Ident("q".into()) {
                    return Err(p.syntax(&name, "the quantum register must be named `q`"));
                }
                let (n, at) = p.indexed("q")?;
                if n == 0 {
                    return Err(p.syntax(&at, "register size must be at least 1"));
                }
                p.expect(Tok::Semi)?;
                num_qubits = Some(n);
                circuit.num_qubits = n;
            }
            "creg" => {
                if num_clbits.is_some() {
                    return Err(p.syntax(&head, "only one classical register is supported"));
                }
                if num_qubits.is_none() || !circuit.ops.is_empty() {
                    return Err(p.syntax(&head, "creg must directly follow qreg"));
                }
                p.next();
                let name = p.peek().clone();
                if name.tok != Tok::Ident("c".into()) {
                    return Err(p.syntax(&name, "the classical register must be named `c`"));
                }
                let (n, at) = p.indexed("c")?;
                if n == 0 {
                    return Err(p.syntax(&at, "register size must be at least 1"));
                }
                p.expect(Tok::Semi)?;
                num_clbits = Some(n);
                circuit.num_clbits = n;
            }
            "measure" => {
                let nq = require_qreg(&p, &head, num_qubits)?;
                p.next();
                let (q, qat) = p.indexed("q")?;
                check_index(&qat, q, nq, "q")?;
                p.expect(Tok::Arrow)?;
                let cname = p.peek().clone();
                if num_clbits.is_none() {
                    return Err(p.syntax(&cname, "measurement without a classical register"));
                }
                let (c, cat) = p.indexed("c")?;
                check_index(&cat, c, num_clbits.unwrap_or(0), "c")?;
                p.expect(Tok::Semi)?;
                seen_measure = true;
                circuit.push(GateApplication::measure(q, c));
            }
            _ => {
                let gate: GateKind = match word.parse() {
                    Ok(g) => g,
                    Err(_) => {
                        return Err(err(
                            head.line,
                            head.column,
                            ParseErrorKind::UnknownGate,
                            format!("unknown gate `{word}`"),
                        ))
                    }
                };
                let nq = require_qreg(&p, &head, num_qubits)?;
                if seen_measure {
                    return Err(p.syntax(&head, "gates may not follow a measurement"));
                }
                p.next();
                let mut params = Vec::new();
                if p.peek().tok == Tok::LParen {
                    p.next();
                    if p.peek().tok != Tok::RParen {
                        params.push(p.angle()?);
                        while p.peek().tok == Tok::Comma {
                            p.next();
                            params.push(p.angle()?);
                        }
                    }
                    p.expect(Tok::RParen)?;
                }
                if params.len() != gate.num_params() {
                    return Err(err(
                        head.line,
                        head.column,
                        ParseErrorKind::ArityMismatch,
                        format!("`{gate}` takes {} parameter(s), got {}", gate.num_params(), params.len()),
                    ));
                }
                let mut qubits = Vec::new();
                loop {
                    let (q, at) = p.indexed("q")?;
                    check_index(&at, q, nq, "q")?;
                    if qubits.contains(&q) {
                        return Err(err(
                            at.line,
                            at.column,
                            ParseErrorKind::ArityMismatch,
                            format!("`{gate}` applied twice to q[{q}]"),
                        ));
                    }
                    qubits.push(q);
                    if p.peek().tok == Tok::Comma {
                        p.next();
                    } else {
                        break;
                    }
                }
                if qubits.len() != gate.num_qubits() {
                    return Err(err(
                        head.line,
                        head.column,
                        ParseErrorKind::ArityMismatch,
                        format!("`{gate}` acts on {} qubit(s), got {}", gate.num_qubits(), qubits.len()),
                    ));
                }
                p.expect(Tok::Semi)?;
                circuit.push(GateApplication::new(gate, params, qubits));
            }
        }
    }
    if num_qubits.is_none() {
        let at = p.peek().clone();
        return Err(p.syntax(&at, "missing `qreg q[n];` declaration"));
    }
    Ok(circuit)
}

fn require_qreg(p: &Parser, at: &Spanned, n: Option<usize>) -> Result<usize, ParseError> {
    n.ok_or_else(|| p.syntax(at, "statement before `qreg q[n];` declaration"))
}

fn check_index(at: &Spanned, idx: usize, size: usize, reg: &str) -> Result<(), ParseError> {
    if idx >= size {
        Err(err(
            at.line,
            at.column,
            ParseErrorKind::IndexOutOfRange,
            format!("{reg}[{idx}] out of range for register of size {size}"),
        ))
    } else {
        Ok(())
    }
}

/// Formats an angle with at least six decimals and at least six significant
/// digits.
pub fn format_angle(theta: f64) -> String {
    let mag = theta.abs();
    let decimals = if mag > 0.0 && mag < 1.0 {
        let lead = mag.log10().floor() as i32;
        (5 - lead).max(6) as usize
    } else {
        6
    };
    let s = format!("{theta:.decimals$}");
    // Avoid "-0.000000".
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Canonical QASM text for any valid circuit, without a dialect check.
pub fn to_qasm(c: &Circuit) -> String {
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", c.num_qubits);
    if c.num_clbits > 0 {
        let _ = writeln!(out, "creg c[{}];", c.num_clbits);
    }
    for op in &c.ops {
        if op.gate == GateKind::Measure {
            let _ = writeln!(out, "measure q[{}] -> c[{}];", op.qubits[0], op.clbits[0]);
            continue;
        }
        out.push_str(op.gate.name());
        if !op.params.is_empty() {
            let params: Vec<String> = op.params.iter().map(|&p| format_angle(p)).collect();
            let _ = write!(out, "({})", params.join(","));
        }
        let qubits: Vec<String> = op.qubits.iter().map(|q| format!("q[{q}]")).collect();
        let _ = writeln!(out, " {};", qubits.join(","));
    }
    out
}

/// Emits `c` as QASM, requiring every gate to be native to `dialect`.
pub fn emit(c: &Circuit, dialect: &GateSetConfig) -> Result<String, EmitError> {
    c.validate()?;
    if let Some((index, op)) = c
        .ops
        .iter()
        .enumerate()
        .find(|(_, op)| !dialect.contains(op.gate))
    {
        return Err(EmitError::ForeignGate {
            index,
            gate: op.gate,
            dialect: dialect.name.clone(),
        });
    }
    Ok(to_qasm(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_cx_program() {
        let c = parse("OPENQASM 2.0;\nqreg q[2];\ncx q[0],q[1];").unwrap();
        assert_eq!(c.num_qubits, 2);
        assert_eq!(c.ops, vec![GateApplication::fixed(GateKind::Cx, &[0, 1])]);
    }

    #[test]
    fn parses_rz_running_example() {
        let c = parse("OPENQASM 2.0;\nqreg q[1];\nrz(3.19) q[0];").unwrap();
        assert_eq!(c.num_qubits, 1);
        assert_eq!(c.ops, vec![GateApplication::rotation(GateKind::Rz, 3.19, &[0])]);
    }

    #[test]
    fn unknown_gate_is_reported() {
        let e = parse("qreg q[1]; foo q[0];").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownGate);
        assert_eq!((e.line, e.column), (1, 12));
    }

    #[test]
    fn index_out_of_range() {
        let e = parse("qreg q[2];\nx q[2];").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::IndexOutOfRange);
        assert_eq!((e.line, e.column), (2, 5));
    }

    #[test]
    fn arity_errors() {
        assert_eq!(parse("qreg q[2];\nrz q[0];").unwrap_err().kind, ParseErrorKind::ArityMismatch);
        assert_eq!(parse("qreg q[2];\nx(0.1) q[0];").unwrap_err().kind, ParseErrorKind::ArityMismatch);
        assert_eq!(parse("qreg q[2];\ncx q[0];").unwrap_err().kind, ParseErrorKind::ArityMismatch);
        assert_eq!(parse("qreg q[2];\ncx q[1],q[1];").unwrap_err().kind, ParseErrorKind::ArityMismatch);
    }

    #[test]
    fn angle_expressions() {
        let src = "qreg q[1];\nrz(pi) q[0];\nrz(pi/2) q[0];\nrz(-pi/2) q[0];\nrz(3*pi/4) q[0];\nrz(pi*2) q[0];\nrz(-0.5) q[0];\nrz(1e-3) q[0];";
        let c = parse(src).unwrap();
        let got: Vec<f64> = c.ops.iter().map(|o| o.params[0]).collect();
        let pi = std::f64::consts::PI;
        let want = [pi, pi / 2.0, -pi / 2.0, 3.0 * pi / 4.0, 2.0 * pi, -0.5, 1e-3];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        for bad in ["rz(pi+1) q[0];", "rz(2*3) q[0];", "rz(sin(1)) q[0];", "rz(pi/0) q[0];"] {
            let e = parse(&format!("qreg q[1];\n{bad}")).unwrap_err();
            assert_eq!(e.kind, ParseErrorKind::Syntax, "{bad}");
        }
    }

    #[test]
    fn comments_and_measure() {
        let src = "// generated\nOPENQASM 2.0;\ninclude \"qelib1.inc\";\n\nqreg q[2];\ncreg c[2];\nsx q[1]; // trailing\nmeasure q[0] -> c[0];\nmeasure q[1] -> c[1];\n";
        let c = parse(src).unwrap();
        assert!(c.has_final_measure);
        assert_eq!(c.num_clbits, 2);
        assert_eq!(c.ops.len(), 3);
    }

    #[test]
    fn register_shape_is_restricted() {
        assert_eq!(parse("qreg r[1];").unwrap_err().kind, ParseErrorKind::Syntax);
        assert_eq!(parse("qreg q[1];\nqreg q[2];").unwrap_err().kind, ParseErrorKind::Syntax);
        assert_eq!(parse("qreg q[1];\ncreg d[1];").unwrap_err().kind, ParseErrorKind::Syntax);
        assert_eq!(parse("OPENQASM 3.0;\nqreg q[1];").unwrap_err().kind, ParseErrorKind::Syntax);
        assert_eq!(parse("").unwrap_err().kind, ParseErrorKind::Syntax);
    }

    #[test]
    fn gate_after_measure_rejected() {
        let e = parse("qreg q[1];\ncreg c[1];\nmeasure q[0] -> c[0];\nx q[0];").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Syntax);
        assert_eq!(e.line, 4);
    }

    #[test]
    fn emit_formats_pi() {
        let mut c = Circuit::new(1);
        c.push(GateApplication::rotation(GateKind::Rz, std::f64::consts::PI, &[0]));
        let text = emit(&c, &GateSetConfig::ionq()).unwrap();
        assert!(text.contains("rz(3.141593) q[0];"), "{text}");
    }

    #[test]
    fn emit_rejects_foreign_gate() {
        let mut c = Circuit::new(2);
        c.push(GateApplication::fixed(GateKind::Cx, &[0, 1]));
        assert!(matches!(
            emit(&c, &GateSetConfig::ionq()),
            Err(EmitError::ForeignGate { gate: GateKind::Cx, .. })
        ));
    }

    #[test]
    fn emit_is_canonical_reformat() {
        let messy = "OPENQASM 2.0;  include \"qelib1.inc\";\nqreg q[2]; cx q[0] , q[1];\n// c\nrz( -pi/2 ) q[1];";
        let c = parse(messy).unwrap();
        let text = emit(&c, &GateSetConfig::eagle()).unwrap();
        assert_eq!(
            text,
            "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncx q[0],q[1];\nrz(-1.570796) q[1];\n"
        );
        assert_eq!(emit(&parse(&text).unwrap(), &GateSetConfig::eagle()).unwrap(), text);
    }

    #[test]
    fn small_angles_keep_significant_digits() {
        assert_eq!(format_angle(0.000123456789), "0.000123457");
        assert_eq!(format_angle(-1e-12), "-0.00000000000100000");
        assert_eq!(format_angle(0.0), "0.000000");
    }

    fn arb_circuit() -> impl Strategy<Value = Circuit> {
        (1usize..=5, any::<bool>()).prop_flat_map(|(n, measure)| {
            let gates: Vec<GateKind> = GateKind::UNITARY
                .into_iter()
                .filter(|g| n >= g.num_qubits())
                .collect();
            let op = (prop::sample::select(gates), -10.0f64..10.0, 0..n, 1..n.max(2))
                .prop_map(move |(g, a, q0, off)| {
                    let qubits = if g.num_qubits() == 2 {
                        vec![q0, (q0 + off) % n]
                    } else {
                        vec![q0]
                    };
                    let params = if g.num_params() == 1 { vec![a] } else { vec![] };
                    GateApplication::new(g, params, qubits)
                });
            prop::collection::vec(op, 0..30).prop_map(move |ops| {
                let mut c = Circuit::new(n);
                for op in ops {
                    c.push(op);
                }
                if measure {
                    c.measure_all();
                }
                c
            })
        })
    }

    proptest! {
        #[test]
        fn emit_parse_round_trip(c in arb_circuit()) {
            let text = to_qasm(&c);
            let back = parse(&text).unwrap();
            prop_assert!(back.approx_eq(&c, 1e-6), "{text}");
        }

        #[test]
        fn parse_is_total(s in "\\PC{0,80}") {
            let _ = parse(&s);
        }

        #[test]
        fn parse_is_total_on_qasm_like_noise(
            s in prop::collection::vec(
                prop::sample::select(vec!["qreg", "q", "[", "]", "1", "2", ";", "rz", "(", ")", "pi", "/", "-", ",", "cx", "measure", "->", "c", "creg", "OPENQASM", "2.0", "\n"]),
                0..40,
            )
        ) {
            let text = s.join(" ");
            if let Err(e) = parse(&text) {
                let lines: Vec<&str> = text.split('\n').collect();
                prop_assert!(e.line >= 1 && e.line <= lines.len());
                prop_assert!(e.column >= 1 && e.column <= lines[e.line - 1].chars().count() + 1);
            }
        }
    }
}
