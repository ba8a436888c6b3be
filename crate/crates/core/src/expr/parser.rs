use std::sync::Arc;

use super::{BinOp, Expr, Func, Node};
use crate::error::{PeaceError, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let tok = match c {
            b'0'..=b'9' | b'.' => return self.number(start),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                    self.pos += 1;
                }
                return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(PeaceError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{ch}`"),
                });
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let from = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - from
        };
        let mut n = digits(&mut self.pos);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return Err(PeaceError::Syntax {
                pos: start,
                msg: "malformed number".into(),
            });
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            if digits(&mut self.pos) == 0 {
                // not an exponent after all; let the identifier lexer report it
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| PeaceError::Syntax {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })?;
        Ok((Tok::Num(value), start))
    }
}

struct Parser<'v, S> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    vars: &'v [S],
}

impl<S: AsRef<str>> Parser<'_, S> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(PeaceError::Syntax {
                pos: self.pos(),
                msg: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.factor()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            // a bare literal directly after the sign is a negative constant
            if let (Tok::Num(v), next) = (self.peek().clone(), self.peek2()) {
                if *next != Tok::Op('^') {
                    self.bump();
                    return Ok(Node::Const(-v));
                }
            }
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        let base = self.base()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.factor()?;
            return Ok(Node::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Node> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if name == "pow" || Func::from_name(&name).is_some() {
                    return self.call(name, pos);
                }
                match self.vars.iter().position(|v| v.as_ref() == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(PeaceError::UnknownIdentifier { name, pos }),
                }
            }
            Tok::End => Err(PeaceError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
            other => Err(PeaceError::Syntax {
                pos,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn call(&mut self, name: String, pos: usize) -> Result<Node> {
        if *self.peek() != Tok::LParen {
            return Err(PeaceError::Syntax {
                pos,
                msg: format!("function `{name}` must be followed by `(`"),
            });
        }
        self.bump();
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "`)` closing the argument list")?;
        let expected = if name == "pow" { 2 } else { 1 };
        if args.len() != expected {
            return Err(PeaceError::Arity {
                func: name,
                expected,
                found: args.len(),
            });
        }
        let mut args = args.into_iter();
        let first = args.next().unwrap();
        Ok(match Func::from_name(&name) {
            Some(f) => Node::call(f, first),
            None => Node::binary(BinOp::Pow, first, args.next().unwrap()),
        })
    }
}

/// Parses `source` against the declared variable names.
pub fn parse_expression<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Expr> {
    let toks = Lexer::tokens(source)?;
    let mut p = Parser { toks, at: 0, vars };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(PeaceError::Syntax {
            pos: p.pos(),
            msg: "trailing input".into(),
        });
    }
    let names = vars.iter().map(|v| v.as_ref().to_string()).collect();
    Ok(Expr::new(root, Arc::new(names)))
}
