use std::collections::HashSet;

use super::{Action, ControllerProgram, Diagnostic, Guard, StateDef, Transition, KEYWORDS};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Arrow,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Number(s) => format!("'{s}'"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Arrow => "'->'".into(),
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

fn lex(source: &str) -> Result<Vec<Spanned>, Diagnostic> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, line, column: col });
            i += 1;
            col += 1;
            continue;
        }
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            i += 1;
            col += 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Spanned { tok: Tok::Arrow, line, column: col });
            i += 2;
            col += 2;
        } else if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            let start = i;
            if c == '-' || c == '+' {
                i += 1;
            }
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            if text.parse::<f64>().is_err() {
                return Err(Diagnostic::new(start_line, start_col, format!("expected number, found '{text}'")));
            }
            out.push(Spanned { tok: Tok::Number(text), line: start_line, column: start_col });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Spanned {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: start_line,
                column: start_col,
            });
        } else {
            return Err(Diagnostic::new(line, col, format!("unexpected character '{c}'")));
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

type ParsedBody = (Vec<StateDef>, Vec<PendingTransition>, Vec<Diagnostic>);

struct PendingTransition {
    transition: Transition,
    line: usize,
    column: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expected(&self, what: &str) -> Diagnostic {
        let t = self.peek();
        let message = match t.tok {
            Tok::Eof => format!("expected {what}"),
            ref other => format!("expected {what}, found {}", other.describe()),
        };
        Diagnostic::new(t.line, t.column, message)
    }

    fn expect(&mut self, tok: Tok) -> Result<Spanned, Diagnostic> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.expected(&tok.describe()))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<Spanned, Diagnostic> {
        if self.at_keyword(kw) {
            Ok(self.bump())
        } else {
            Err(self.expected(&format!("'{kw}'")))
        }
    }

    fn name(&mut self, what: &str) -> Result<Spanned, Diagnostic> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok(self.bump()),
            _ => Err(self.expected(what)),
        }
    }

    fn number(&mut self) -> Result<(f64, Spanned), Diagnostic> {
        match &self.peek().tok {
            Tok::Number(s) => {
                let v: f64 = s.parse().unwrap_or(f64::NAN);
                let t = self.bump();
                if !v.is_finite() {
                    return Err(Diagnostic::new(t.line, t.column, "out of range: number must be finite"));
                }
                Ok((v, t))
            }
            _ => Err(self.expected("number")),
        }
    }

    fn action(&mut self) -> Result<Action, Diagnostic> {
        if self.at_keyword("random_walk") {
            self.bump();
            Ok(Action::RandomWalk)
        } else if self.at_keyword("stop") {
            self.bump();
            Ok(Action::Stop)
        } else if self.at_keyword("goto") {
            self.bump();
            self.expect(Tok::LParen)?;
            let (x, _) = self.number()?;
            self.expect(Tok::Comma)?;
            let (y, _) = self.number()?;
            self.expect(Tok::RParen)?;
            Ok(Action::Goto { x, y })
        } else {
            Err(self.expected("action ('random_walk', 'stop' or 'goto')"))
        }
    }

    fn transition(&mut self) -> Result<PendingTransition, Diagnostic> {
        let guard = if self.at_keyword("after") {
            self.bump();
            let t = self.peek().clone();
            let n = match &t.tok {
                Tok::Number(s) if s.chars().all(|c| c.is_ascii_digit()) => match s.parse::<u64>() {
                    Ok(n) => n,
                    Err(_) => return Err(Diagnostic::new(t.line, t.column, "out of range: tick count too large")),
                },
                _ => return Err(self.expected("tick count")),
            };
            self.bump();
            if n == 0 {
                return Err(Diagnostic::new(t.line, t.column, "out of range: after requires at least 1 tick"));
            }
            self.keyword("ticks")?;
            Guard::After(n)
        } else if self.at_keyword("at_target") {
            self.bump();
            let (tol, t) = self.number()?;
            if tol <= 0.0 {
                return Err(Diagnostic::new(
                    t.line,
                    t.column,
                    "out of range: at_target tolerance must be positive",
                ));
            }
            Guard::AtTarget(tol)
        } else {
            return Err(self.expected("transition ('after' or 'at_target') or '}'"));
        };
        self.expect(Tok::Arrow)?;
        let target = self.name("target state name")?;
        let Tok::Ident(name) = target.tok else { unreachable!() };
        Ok(PendingTransition {
            transition: Transition { guard, target: name },
            line: target.line,
            column: target.column,
        })
    }

    fn program(&mut self) -> Result<ParsedBody, Diagnostic> {
        let mut states = Vec::new();
        let mut pending = Vec::new();
        let mut seen = HashSet::new();
        let mut semantic = Vec::new();
        loop {
            if states.is_empty() || self.peek().tok != Tok::Eof {
                self.keyword("state")?;
            } else {
                break;
            }
            let name_tok = self.name("state name")?;
            let Tok::Ident(name) = name_tok.tok else { unreachable!() };
            if !seen.insert(name.clone()) {
                semantic.push(Diagnostic::new(
                    name_tok.line,
                    name_tok.column,
                    format!("duplicate state '{name}'"),
                ));
            }
            self.expect(Tok::LBrace)?;
            let action = self.action()?;
            let mut transitions = Vec::new();
            while self.peek().tok != Tok::RBrace {
                let p = self.transition()?;
                transitions.push(p.transition.clone());
                pending.push(p);
            }
            self.expect(Tok::RBrace)?;
            states.push(StateDef { name, action, transitions });
        }
        Ok((states, pending, semantic))
    }
}

/// Parses controller source into a validated AST, or returns diagnostics.
/// Never panics; every input produces one or the other.
pub fn parse_program(source: &str) -> Result<ControllerProgram, Vec<Diagnostic>> {
    let toks = lex(source).map_err(|d| vec![d])?;
    let mut parser = Parser { toks, pos: 0 };
    let (states, pending, mut diags) = parser.program().map_err(|d| vec![d])?;
    for p in &pending {
        if !states.iter().any(|s| s.name == p.transition.target) {
            diags.push(Diagnostic::new(
                p.line,
                p.column,
                format!("unknown state '{}'", p.transition.target),
            ));
        }
    }
    if diags.is_empty() {
        Ok(ControllerProgram { states })
    } else {
        diags.sort_by_key(|d| (d.line, d.column));
        Err(diags)
    }
}
