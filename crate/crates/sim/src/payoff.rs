//! Payoff expressions over terminal path data.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := '-' unary | atom
//! atom    := number | name | '1{' name cmp number '}' | '(' expr ')'
//! cmp     := '==' | '!=' | '<=' | '<' | '>=' | '>'
//! name    := W | ieta | itau | M | H | H_prime | MH | eta | tau
//! ```
//!
//! `eta` and `tau` are the drawn times (`tau` is `inf` if it never
//! occurs); the other names are terminal channel values.

use serde::Serialize;

use crate::paths::{Channel, PathBatch};
use crate::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Variable {
    Channel(Channel),
    Eta,
    Tau,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Cmp {
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Payoff {
    Const(f64),
    Var(Variable),
    Indicator(Variable, Cmp, f64),
    Neg(Box<Payoff>),
    Add(Box<Payoff>, Box<Payoff>),
    Sub(Box<Payoff>, Box<Payoff>),
    Mul(Box<Payoff>, Box<Payoff>),
}

impl Payoff {
    pub fn parse(text: &str) -> Result<Payoff, SimError> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval_path(&self, batch: &PathBatch, path: usize) -> f64 {
        let var = |v: &Variable| match v {
            Variable::Channel(c) => batch.terminal(path, *c),
            Variable::Eta => batch.eta[path],
            Variable::Tau => batch.tau[path].unwrap_or(f64::INFINITY),
        };
        match self {
            Payoff::Const(c) => *c,
            Payoff::Var(v) => var(v),
            Payoff::Indicator(v, cmp, x) => {
                let a = var(v);
                let close = (a - x).abs() <= 1e-9;
                let hit = match cmp {
                    Cmp::Eq => close,
                    Cmp::Ne => !close,
                    Cmp::Le => a <= *x || close,
                    Cmp::Lt => a < *x && !close,
                    Cmp::Ge => a >= *x || close,
                    Cmp::Gt => a > *x && !close,
                };
                hit as u8 as f64
            }
            Payoff::Neg(a) => -a.eval_path(batch, path),
            Payoff::Add(a, b) => a.eval_path(batch, path) + b.eval_path(batch, path),
            Payoff::Sub(a, b) => a.eval_path(batch, path) - b.eval_path(batch, path),
            Payoff::Mul(a, b) => a.eval_path(batch, path) * b.eval_path(batch, path),
        }
    }

    pub fn eval(&self, batch: &PathBatch) -> Vec<f64> {
        (0..batch.n).map(|p| self.eval_path(batch, p)).collect()
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> SimError {
        SimError::Payoff {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Payoff, SimError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat("+") {
                lhs = Payoff::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat("-") {
                lhs = Payoff::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Payoff, SimError> {
        let mut lhs = self.unary()?;
        while self.eat("*") {
            lhs = Payoff::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Payoff, SimError> {
        if self.eat("-") {
            return Ok(Payoff::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Payoff, SimError> {
        if self.eat("(") {
            let e = self.expr()?;
            if !self.eat(")") {
                return Err(self.error("expected ')'"));
            }
            return Ok(e);
        }
        if self.eat("1{") {
            let v = self.variable()?;
            let cmp = [
                ("==", Cmp::Eq),
                ("!=", Cmp::Ne),
                ("<=", Cmp::Le),
                (">=", Cmp::Ge),
                ("<", Cmp::Lt),
                (">", Cmp::Gt),
            ]
            .into_iter()
            .find(|(s, _)| self.eat(s))
            .map(|(_, c)| c)
            .ok_or_else(|| self.error("expected a comparison"))?;
            let x = self.number()?.ok_or_else(|| self.error("expected a number"))?;
            if !self.eat("}") {
                return Err(self.error("expected '}'"));
            }
            return Ok(Payoff::Indicator(v, cmp, x));
        }
        if let Some(x) = self.number()? {
            return Ok(Payoff::Const(x));
        }
        Ok(Payoff::Var(self.variable()?))
    }

    fn number(&mut self) -> Result<Option<f64>, SimError> {
        self.skip_ws();
        let start = self.pos;
        if self.eat("inf") {
            return Ok(Some(f64::INFINITY));
        }
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') && self.pos > start {
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'-' || self.src[self.pos] == b'+') {
                self.pos += 1;
            }
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos == start {
            return Ok(None);
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse().map(Some).map_err(|_| {
            self.pos = start;
            self.error("malformed number")
        })
    }

    fn variable(&mut self) -> Result<Variable, SimError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match name {
            "eta" => Ok(Variable::Eta),
            "tau" => Ok(Variable::Tau),
            _ => Channel::parse(name).map(Variable::Channel).ok_or_else(|| {
                self.pos = start;
                self.error(&format!("unknown name {name:?}"))
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{simulate, SimConfig};
    use crate::presets::preset;

    #[test]
    fn parses_and_evaluates() {
        let b = simulate(&preset("baseline").unwrap(), &SimConfig::new(500, 0.5, 3)).unwrap();
        let p = Payoff::parse("1{tau==2} * 1{eta == 2}").unwrap();
        let q = Payoff::parse("2*(H_prime - 0.5) + -itau + 3e-1").unwrap();
        for i in 0..b.n {
            let want = (b.tau[i] == Some(2.0) && b.eta[i] == 2.0) as u8 as f64;
            assert_eq!(p.eval_path(&b, i), want);
            let hp = b.terminal(i, Channel::HPrime);
            let it = b.terminal(i, Channel::ITau);
            assert!((q.eval_path(&b, i) - (2.0 * (hp - 0.5) - it + 0.3)).abs() < 1e-12);
        }
        assert_eq!(Payoff::parse("1{tau>=inf}").unwrap(), Payoff::Indicator(Variable::Tau, Cmp::Ge, f64::INFINITY));
    }

    #[test]
    fn reports_positions() {
        for (text, pos) in [("1{tau=2}", 5), ("foo", 0), ("1 +", 3), ("(eta", 4), ("eta eta", 4)] {
            match Payoff::parse(text) {
                Err(SimError::Payoff { position, .. }) => assert_eq!(position, pos, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
