//! Recursive-descent parser for `.catl` sources.
//!
//! Precedence from loosest to tightest: `|`, `&`, `U[a,b]`, then the prefix
//! operators `!`, `F[a,b]`, `G[a,b]`. `#` starts a comment that runs to the
//! end of the line.

use crate::error::ParseError;

use super::ast::{Formula, InnerFormula, Interval, OuterAtom, OuterFormula, Predicate, Task, TimedTask};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Bang,
    Amp,
    Bar,
    At,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Bar => "`|`".into(),
            Tok::At => "`@`".into(),
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

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let ch = chars[i];
        let start = (line, col);
        let advance = |i: &mut usize, line: &mut usize, col: &mut usize| {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        if ch.is_whitespace() {
            advance(&mut i, &mut line, &mut col);
            continue;
        }
        if ch == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col);
            }
            continue;
        }
        let single = match ch {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '!' => Some(Tok::Bang),
            '&' => Some(Tok::Amp),
            '|' => Some(Tok::Bar),
            '@' => Some(Tok::At),
            _ => None,
        };
        let tok = if let Some(t) = single {
            advance(&mut i, &mut line, &mut col);
            t
        } else if ch.is_alphabetic() || ch == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                advance(&mut i, &mut line, &mut col);
            }
            Tok::Ident(s)
        } else if ch.is_ascii_digit() || ch == '-' || ch == '+' || ch == '.' {
            let mut s = String::new();
            s.push(ch);
            advance(&mut i, &mut line, &mut col);
            while i < chars.len() {
                let c = chars[i];
                let exp_sign = (c == '-' || c == '+') && matches!(s.chars().last(), Some('e' | 'E'));
                if c.is_ascii_alphanumeric() || c == '.' || exp_sign {
                    s.push(c);
                    advance(&mut i, &mut line, &mut col);
                } else {
                    break;
                }
            }
            Tok::Number(s)
        } else {
            return Err(ParseError {
                line,
                column: col,
                message: format!("unexpected character `{ch}`"),
            });
        };
        out.push(Spanned {
            tok,
            line: start.0,
            column: start.1,
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    capabilities: Option<&'a [String]>,
}

/// Parses an atom at the current position; shared formula structure is
/// handled by [`Parser::formula`].
trait AtomSyntax: Sized {
    fn parse_atom(p: &mut Parser<'_>) -> Result<Option<Self>, ParseError>;
}

impl AtomSyntax for Predicate {
    fn parse_atom(p: &mut Parser<'_>) -> Result<Option<Self>, ParseError> {
        match p.peek_ident() {
            Some("in") if p.peek_at(1) == &Tok::LParen => {
                p.bump();
                p.expect(Tok::LParen)?;
                let name = p.ident("region name")?;
                p.expect(Tok::RParen)?;
                Ok(Some(Predicate::InRegion(name)))
            }
            Some("halfplane") if p.peek_at(1) == &Tok::LParen => {
                p.bump();
                p.expect(Tok::LParen)?;
                let nx = p.real()?;
                p.expect(Tok::Comma)?;
                let ny = p.real()?;
                p.expect(Tok::Comma)?;
                let c = p.real()?;
                p.expect(Tok::RParen)?;
                Ok(Some(Predicate::HalfPlane {
                    normal: [nx, ny],
                    offset: c,
                }))
            }
            _ => Ok(None),
        }
    }
}

impl AtomSyntax for OuterAtom {
    fn parse_atom(p: &mut Parser<'_>) -> Result<Option<Self>, ParseError> {
        if !(p.peek_ident() == Some("task") && p.peek_at(1) == &Tok::LParen) {
            return Ok(None);
        }
        p.bump();
        p.expect(Tok::LParen)?;
        let inner: InnerFormula = p.formula()?;
        p.expect(Tok::Comma)?;
        let (line, column) = p.here();
        let capability = p.ident("capability name")?;
        if let Some(vocab) = p.capabilities {
            if !vocab.iter().any(|c| *c == capability) {
                return Err(ParseError {
                    line,
                    column,
                    message: format!("unknown capability `{capability}`"),
                });
            }
        }
        p.expect(Tok::Comma)?;
        let (line, column) = p.here();
        let count = p.natural()?;
        if count == 0 {
            return Err(ParseError {
                line,
                column,
                message: "task count must be at least 1".into(),
            });
        }
        p.expect(Tok::RParen)?;
        let task = Task {
            inner,
            capability,
            count,
        };
        if p.peek() == &Tok::At {
            p.bump();
            let time = p.natural()?;
            Ok(Some(OuterAtom::Timed(TimedTask { task, time })))
        } else {
            Ok(Some(OuterAtom::Task(task)))
        }
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Tok::Ident(s) => Some(s.as_str()),
            _ => None,
        }
    }

    fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.column)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.here();
        Err(ParseError {
            line,
            column,
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {}, found {}", tok.describe(), self.peek().describe()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected {what}, found {}", other.describe())),
        }
    }

    fn real(&mut self) -> Result<f64, ParseError> {
        match self.peek().clone() {
            Tok::Number(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    self.bump();
                    Ok(v)
                }
                _ => self.error(format!("invalid number `{s}`")),
            },
            other => self.error(format!("expected a number, found {}", other.describe())),
        }
    }

    fn natural(&mut self) -> Result<usize, ParseError> {
        match self.peek().clone() {
            Tok::Number(s) => {
                if s.starts_with('-') {
                    return self.error(format!("negative value `{s}`"));
                }
                match s.parse::<usize>() {
                    Ok(v) => {
                        self.bump();
                        Ok(v)
                    }
                    Err(_) => self.error(format!("expected a nonnegative integer, found `{s}`")),
                }
            }
            other => self.error(format!("expected an integer, found {}", other.describe())),
        }
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        self.expect(Tok::LBracket)?;
        let (line, column) = self.here();
        let lo = self.natural()?;
        self.expect(Tok::Comma)?;
        let hi = self.natural()?;
        self.expect(Tok::RBracket)?;
        if lo > hi {
            return Err(ParseError {
                line,
                column,
                message: format!("reversed interval [{lo},{hi}]"),
            });
        }
        Ok(Interval { lo, hi })
    }

    fn formula<A: AtomSyntax>(&mut self) -> Result<Formula<A>, ParseError> {
        let mut parts = vec![self.conjunction()?];
        while self.peek() == &Tok::Bar {
            self.bump();
            parts.push(self.conjunction()?);
        }
        Ok(Formula::and_or(parts, false))
    }

    fn conjunction<A: AtomSyntax>(&mut self) -> Result<Formula<A>, ParseError> {
        let mut parts = vec![self.until()?];
        while self.peek() == &Tok::Amp {
            self.bump();
            parts.push(self.until()?);
        }
        Ok(Formula::and_or(parts, true))
    }

    fn until<A: AtomSyntax>(&mut self) -> Result<Formula<A>, ParseError> {
        let lhs = self.unary()?;
        if self.peek_ident() == Some("U") && self.peek_at(1) == &Tok::LBracket {
            self.bump();
            let i = self.interval()?;
            let rhs = self.unary()?;
            if self.peek_ident() == Some("U") && self.peek_at(1) == &Tok::LBracket {
                return self.error("chained until needs parentheses");
            }
            return Ok(Formula::Until(i, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary<A: AtomSyntax>(&mut self) -> Result<Formula<A>, ParseError> {
        if self.peek() == &Tok::Bang {
            self.bump();
            return Ok(Formula::Not(Box::new(self.unary()?)));
        }
        if let Some(op @ ("F" | "G")) = self.peek_ident() {
            if self.peek_at(1) == &Tok::LBracket {
                let always = op == "G";
                self.bump();
                let i = self.interval()?;
                let body = Box::new(self.unary()?);
                return Ok(if always {
                    Formula::Always(i, body)
                } else {
                    Formula::Eventually(i, body)
                });
            }
        }
        self.primary()
    }

    fn primary<A: AtomSyntax>(&mut self) -> Result<Formula<A>, ParseError> {
        if self.peek() == &Tok::LParen {
            self.bump();
            let f = self.formula()?;
            self.expect(Tok::RParen)?;
            return Ok(f);
        }
        if self.peek_ident() == Some("true") {
            self.bump();
            return Ok(Formula::True);
        }
        if let Some(a) = A::parse_atom(self)? {
            return Ok(Formula::Atom(a));
        }
        self.error(format!("expected a formula, found {}", self.peek().describe()))
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            self.error(format!("unexpected {} after formula", self.peek().describe()))
        }
    }
}

impl<A> Formula<A> {
    fn and_or(mut parts: Vec<Formula<A>>, and: bool) -> Self {
        if parts.len() == 1 {
            parts.pop().expect("one part")
        } else if and {
            Formula::And(parts)
        } else {
            Formula::Or(parts)
        }
    }
}

fn run<A: AtomSyntax>(text: &str, capabilities: Option<&[String]>) -> Result<Formula<A>, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        capabilities,
    };
    let f = p.formula()?;
    p.finish()?;
    Ok(f)
}

/// Parses an outer (team-level) specification.
pub fn parse_spec(text: &str) -> Result<OuterFormula, ParseError> {
    run(text, None)
}

/// Like [`parse_spec`], rejecting capabilities outside `vocabulary`.
pub fn parse_spec_checked(text: &str, vocabulary: &[String]) -> Result<OuterFormula, ParseError> {
    run(text, Some(vocabulary))
}

/// Parses an inner (single-agent) formula.
pub fn parse_inner(text: &str) -> Result<InnerFormula, ParseError> {
    run(text, None)
}
