//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := ("-")? power
//! power  := atom ("^" factor)?
//! atom   := number | var | func "(" expr ")" | "(" expr ")"
//! ```

use super::{BinOp, ExprError, Expression, Func, Node};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn syntax(position: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'*' => out.push((Tok::Star, start)),
            b'/' => out.push((Tok::Slash, start)),
            b'^' => out.push((Tok::Caret, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number '{lit}'")))?;
                if !v.is_finite() {
                    return Err(syntax(start, format!("number '{lit}' is out of range")));
                }
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character '{ch}'")));
            }
        }
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(
                self.offset(),
                format!("expected {}, found {}", want.describe(), self.peek().describe()),
            ))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.power()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Node::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Node::call(func, arg));
                }
                let digits = name.strip_prefix('x').filter(|d| {
                    !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())
                });
                match digits {
                    Some(d) => {
                        let index: usize = d.parse().unwrap_or(usize::MAX);
                        if index == 0 || index > self.dim {
                            return Err(ExprError::UnknownVariable {
                                index,
                                dimension: self.dim,
                                position: at,
                            });
                        }
                        Ok(Node::Var(index))
                    }
                    None => Err(syntax(at, format!("unknown identifier '{name}'"))),
                }
            }
            other => Err(syntax(
                at,
                format!("expected a number, variable, function or '(', found {}", other.describe()),
            )),
        }
    }
}

/// Parses `text` as an expression over `x1..x{dim}`.
pub fn parse(text: &str, dim: usize) -> Result<Expression, ExprError> {
    if text.trim().is_empty() {
        return Err(syntax(0, "empty expression"));
    }
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        dim,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(syntax(
            p.offset(),
            format!("expected an operator or end of input, found {}", p.peek().describe()),
        ));
    }
    Ok(Expression { root, dim })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_variables() {
        let e = parse("x1 + x2", 2).unwrap();
        assert_eq!(
            *e.node(),
            Node::binary(BinOp::Add, Node::Var(1), Node::Var(2))
        );
    }

    #[test]
    fn precedence_and_associativity() {
        // -x1^2 is -(x1^2)
        let e = parse("-x1^2", 1).unwrap();
        assert_eq!(
            *e.node(),
            Node::Neg(Box::new(Node::binary(
                BinOp::Pow,
                Node::Var(1),
                Node::Const(2.0)
            )))
        );
        // right-associative power
        assert_eq!(parse("2^3^2", 1).unwrap().evaluate(&[0.0]).unwrap(), 512.0);
        // left-associative subtraction and division
        assert_eq!(parse("10 - 4 - 3", 1).unwrap().evaluate(&[0.0]).unwrap(), 3.0);
        assert_eq!(parse("8 / 4 / 2", 1).unwrap().evaluate(&[0.0]).unwrap(), 1.0);
        assert_eq!(parse("2 + 3 * 4", 1).unwrap().evaluate(&[0.0]).unwrap(), 14.0);
        assert_eq!(parse("x1^-1", 1).unwrap().evaluate(&[4.0]).unwrap(), 0.25);
    }

    #[test]
    fn rotor_region_parses() {
        assert!(parse("0.09 - ((x1-1)^2 + x2^2)", 2).is_ok());
    }

    #[test]
    fn unclosed_call_fails_at_end() {
        let err = parse("sin(x3", 3).unwrap_err();
        match err {
            ExprError::Syntax { position, message } => {
                assert_eq!(position, 6);
                assert!(message.contains("')'"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_variable() {
        assert!(matches!(
            parse("x1 + x3", 2),
            Err(ExprError::UnknownVariable { index: 3, position: 5, .. })
        ));
        assert!(matches!(
            parse("x0", 2),
            Err(ExprError::UnknownVariable { index: 0, .. })
        ));
    }

    #[test]
    fn assorted_syntax_errors() {
        for bad in ["", "   ", "x1 +", "(x1", "x1 x2", "foo(x1)", "x1 $ 2", "sin x1", "1e999"] {
            assert!(
                matches!(parse(bad, 2), Err(ExprError::Syntax { .. })),
                "{bad:?} should be a syntax error"
            );
        }
    }

    #[test]
    fn whitespace_insensitive() {
        assert_eq!(parse("x1*x2+1", 2).unwrap(), parse(" x1 * x2\t+ 1 ", 2).unwrap());
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1.5e-3", 1).unwrap().evaluate(&[0.0]).unwrap(), 1.5e-3);
        assert_eq!(parse(".5", 1).unwrap().evaluate(&[0.0]).unwrap(), 0.5);
    }
}
