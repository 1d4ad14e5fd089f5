use crate::logic::expr::Expr;
use crate::{Error, Result};

/// Parses `~`/`&`/`|` expressions over variables written `v12` or bare `12`.
///
/// Precedence: `~` binds tightest, then `&`, then `|`; the binary operators
/// are left-associative. ASCII whitespace is ignored between tokens.
pub fn parse(text: &str) -> Result<Expr> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error("empty input"));
    }
    let expr = p.or_expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn or_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.and_expr()?;
        loop {
            self.skip_ws();
            if self.eat(b'|') {
                let rhs = self.and_expr()?;
                lhs = Expr::or(lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn and_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            if self.eat(b'&') {
                let rhs = self.unary()?;
                lhs = Expr::and(lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        self.skip_ws();
        if self.eat(b'~') {
            return Ok(Expr::not(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.or_expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(b'v') => {
                self.pos += 1;
                self.variable_digits()
            }
            Some(c) if c.is_ascii_digit() => self.variable_digits(),
            Some(c) => Err(self.error(&format!("unexpected character {:?}", c as char))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn variable_digits(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected variable digits"));
        }
        let digits = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        let id: u32 = digits.parse().map_err(|_| Error::Parse {
            offset: start,
            message: format!("variable id {digits} out of range"),
        })?;
        Ok(Expr::var(id))
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
    }
}
