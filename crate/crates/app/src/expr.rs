//! Arithmetic expressions in `x1`, `x2` for metrics, forcing and boundary data.

use std::fmt;

use meval::{Context, Expr};

use crate::error::ConfigError;

const FUNCTIONS: [&str; 4] = ["sin", "cos", "exp", "sqrt"];

/// A parsed expression; cloning and evaluation are cheap and thread-safe.
#[derive(Clone)]
pub struct Expression {
    text: String,
    expr: Expr,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.text)
    }
}

fn context() -> Context<'static> {
    let mut ctx = Context::empty();
    ctx.var("pi", std::f64::consts::PI);
    ctx.func("sin", f64::sin);
    ctx.func("cos", f64::cos);
    ctx.func("exp", f64::exp);
    ctx.func("sqrt", f64::sqrt);
    ctx
}

/// 1-based column of the first unbalanced parenthesis, scanning from the left for `)` or the right for `(`.
fn unbalanced_paren(text: &str, closing: bool) -> usize {
    let b = text.as_bytes();
    if closing {
        let mut depth = 0i64;
        for (i, &c) in b.iter().enumerate() {
            match c {
                b'(' => depth += 1,
                b')' if depth == 0 => return i + 1,
                b')' => depth -= 1,
                _ => {}
            }
        }
    } else {
        let mut depth = 0i64;
        for (i, &c) in b.iter().enumerate().rev() {
            match c {
                b')' => depth += 1,
                b'(' if depth == 0 => return i + 1,
                b'(' => depth -= 1,
                _ => {}
            }
        }
    }
    text.len() + 1
}

fn syntax(text: &str, column: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Syntax { text: text.into(), column, msg: msg.into() }
}

fn translate(text: &str, e: meval::Error) -> ConfigError {
    use meval::{ParseError, RPNError};
    let end = text.len() + 1;
    match e {
        meval::Error::ParseError(ParseError::UnexpectedToken(i)) => syntax(text, i + 1, "unexpected token"),
        meval::Error::ParseError(ParseError::MissingRParen(_)) => syntax(text, end, "missing closing parenthesis"),
        meval::Error::ParseError(ParseError::MissingArgument) => syntax(text, end, "missing operand"),
        meval::Error::RPNError(RPNError::MismatchedLParen(_)) => syntax(text, unbalanced_paren(text, false), "unmatched '('"),
        meval::Error::RPNError(RPNError::MismatchedRParen(_)) => syntax(text, unbalanced_paren(text, true), "unmatched ')'"),
        meval::Error::RPNError(RPNError::UnexpectedComma(_)) => syntax(text, text.find(',').map_or(end, |i| i + 1), "unexpected ','"),
        meval::Error::RPNError(r) => syntax(text, end, format!("malformed expression ({r})")),
        meval::Error::UnknownVariable(v) => {
            let col = find_word(text, &v).map_or(end, |i| i + 1);
            syntax(text, col, format!("unknown name '{v}' (allowed: x1, x2, pi)"))
        }
        meval::Error::Function(name, err) => {
            let col = find_word(text, &name).map_or(end, |i| i + 1);
            let msg = match err {
                meval::FuncEvalError::UnknownFunction => format!("unknown function '{name}' (allowed: {})", FUNCTIONS.join(", ")),
                other => format!("bad call to '{name}': {other}"),
            };
            syntax(text, col, msg)
        }
    }
}

fn find_word(text: &str, word: &str) -> Option<usize> {
    let b = text.as_bytes();
    let ident = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    text.match_indices(word)
        .map(|(i, _)| i)
        .find(|&i| (i == 0 || !ident(b[i - 1])) && b.get(i + word.len()).map_or(true, |&c| !ident(c)))
}

impl Expression {
    /// Parses `text` and checks that it uses only `x1`, `x2`, `pi` and the supported functions.
    pub fn parse(text: &str) -> Result<Expression, ConfigError> {
        if text.trim().is_empty() {
            return Err(syntax(text, 1, "empty expression"));
        }
        let expr: Expr = text.parse().map_err(|e| translate(text, e))?;
        let e = Expression { text: text.into(), expr };
        // names are resolved lazily, so probe once; NaN here is a domain issue, not a syntax issue
        e.try_eval([0.5, 0.5]).map_err(|err| translate(text, err))?;
        Ok(e)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    fn try_eval(&self, x: [f64; 2]) -> Result<f64, meval::Error> {
        let mut ctx = context();
        ctx.var("x1", x[0]).var("x2", x[1]);
        self.expr.eval_with_context(ctx)
    }

    /// Value at `x`; NaN or infinity signals a domain error at that point.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.try_eval(x).unwrap_or(f64::NAN)
    }

    /// Value at `x`, rejecting non-finite results.
    pub fn eval_checked(&self, x: [f64; 2]) -> Result<f64, ConfigError> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError::Domain { text: self.text.clone(), x: x[0], y: x[1] })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_values() {
        assert_eq!(Expression::parse("1 + 0*x1").unwrap().eval([0.3, 0.7]), 1.0);
        assert!((Expression::parse("sin(pi*x1)").unwrap().eval([0.5, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(Expression::parse("x1^2 + 2*x1*x2").unwrap().eval([1.0, 2.0]), 5.0);
    }

    #[test]
    fn precedence() {
        let e = Expression::parse("2 + 3*4^2/8 - -1").unwrap();
        assert_eq!(e.eval([0.0, 0.0]), 9.0);
        assert_eq!(Expression::parse("-x1^2").unwrap().eval([3.0, 0.0]), -9.0);
        assert_eq!(Expression::parse("2^3^2").unwrap().eval([0.0, 0.0]), 512.0);
        assert!((Expression::parse("exp(1.5e-1)*cos(0)").unwrap().eval([0.0, 0.0]) - 0.15f64.exp()).abs() < 1e-15);
    }

    fn column(text: &str) -> usize {
        match Expression::parse(text).unwrap_err() {
            ConfigError::Syntax { column, .. } => column,
            e => panic!("expected a syntax error, got {e}"),
        }
    }

    #[test]
    fn syntax_errors_carry_columns() {
        assert_eq!(column("x1 + $"), 6);
        assert_eq!(column("(x1 + 1"), 8);
        assert_eq!(column("x1 + 1)"), 7);
        assert_eq!(column("x1 + y"), 6);
        assert_eq!(column("2*tan(x1)"), 3);
        assert_eq!(column("x1 +"), 5);
        assert_eq!(column(""), 1);
    }

    #[test]
    fn domain_error_reports_location() {
        let e = Expression::parse("sqrt(x1 - 0.75)").unwrap();
        assert!(e.eval_checked([1.0, 0.0]).is_ok());
        match e.eval_checked([0.25, 0.5]).unwrap_err() {
            ConfigError::Domain { x, y, .. } => assert_eq!((x, y), (0.25, 0.5)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn shared_across_threads() {
        let e = Expression::parse("x1*x2").unwrap();
        let s: f64 = std::thread::scope(|s| {
            let h: Vec<_> = (0..4).map(|i| { let e = &e; s.spawn(move || e.eval([i as f64, 2.0])) }).collect();
            h.into_iter().map(|h| h.join().unwrap()).sum()
        });
        assert_eq!(s, 12.0);
    }
}
