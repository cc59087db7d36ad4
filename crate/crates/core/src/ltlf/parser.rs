//! Recursive-descent parser for LTLf formulas.
//!
//! ```text
//! implies := or ( "->" implies )?
//! or      := and ( "|" and )*
//! and     := unary ( "&" unary )*
//! unary   := ( "!" | "G" | "F" | "X" ) unary | primary
//! primary := "true" | "false" | IDENT | "(" implies ")"
//! ```
//!
//! Positions in errors are character offsets into the input.

use super::formula::{Alphabet, Formula};
use super::{LtlfError, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Not,
    And,
    Or,
    Arrow,
    LParen,
    RParen,
    End,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

impl Lexer {
    fn next_token(&mut self) -> Result<(Tok, usize)> {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.chars.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let peek = self.chars.get(self.pos + 1).copied();
        let (tok, len) = match c {
            '!' | '~' | '¬' => (Tok::Not, 1),
            '&' if peek == Some('&') => (Tok::And, 2),
            '&' | '∧' => (Tok::And, 1),
            '|' if peek == Some('|') => (Tok::Or, 2),
            '|' | '∨' => (Tok::Or, 1),
            '-' if peek == Some('>') => (Tok::Arrow, 2),
            '→' => (Tok::Arrow, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let len = self.chars[start..]
                    .iter()
                    .take_while(|c| c.is_ascii_alphanumeric() || **c == '_')
                    .count();
                let word: String = self.chars[start..start + len].iter().collect();
                (Tok::Ident(word), len)
            }
            other => {
                return Err(LtlfError::Syntax {
                    position: start,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        self.pos += len;
        Ok((tok, start))
    }
}

struct Parser<'a> {
    lexer: Lexer,
    current: Tok,
    current_pos: usize,
    alphabet: Option<&'a Alphabet>,
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<()> {
        let (tok, pos) = self.lexer.next_token()?;
        self.current = tok;
        self.current_pos = pos;
        Ok(())
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(LtlfError::Syntax { position: self.current_pos, message: message.into() })
    }

    fn implies(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if self.current == Tok::Arrow {
            self.advance()?;
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut operands = vec![self.and()?];
        while self.current == Tok::Or {
            self.advance()?;
            operands.push(self.and()?);
        }
        Ok(if operands.len() == 1 { operands.pop().unwrap() } else { Formula::Or(operands) })
    }

    fn and(&mut self) -> Result<Formula> {
        let mut operands = vec![self.unary()?];
        while self.current == Tok::And {
            self.advance()?;
            operands.push(self.unary()?);
        }
        Ok(if operands.len() == 1 { operands.pop().unwrap() } else { Formula::And(operands) })
    }

    fn unary(&mut self) -> Result<Formula> {
        let wrap: fn(Formula) -> Formula = match &self.current {
            Tok::Not => Formula::not,
            Tok::Ident(w) if w == "G" => Formula::globally,
            Tok::Ident(w) if w == "F" => Formula::eventually,
            Tok::Ident(w) if w == "X" => Formula::next,
            _ => return self.primary(),
        };
        self.advance()?;
        Ok(wrap(self.unary()?))
    }

    fn primary(&mut self) -> Result<Formula> {
        match self.current.clone() {
            Tok::LParen => {
                self.advance()?;
                let inner = self.implies()?;
                if self.current != Tok::RParen {
                    return self.error("expected ')'");
                }
                self.advance()?;
                Ok(inner)
            }
            Tok::Ident(word) => {
                let f = match word.as_str() {
                    "true" => Formula::True,
                    "false" => Formula::False,
                    name => match self.alphabet {
                        Some(alphabet) => match alphabet.canonical(name) {
                            Some(canon) => Formula::atom(canon),
                            None => return Err(LtlfError::UnknownAtom(name.to_string())),
                        },
                        None => Formula::atom(name),
                    },
                };
                self.advance()?;
                Ok(f)
            }
            Tok::End => self.error("unexpected end of input"),
            _ => self.error("expected an expression"),
        }
    }
}

fn run(text: &str, alphabet: Option<&Alphabet>) -> Result<Formula> {
    let mut parser = Parser {
        lexer: Lexer { chars: text.chars().collect(), pos: 0 },
        current: Tok::End,
        current_pos: 0,
        alphabet,
    };
    parser.advance()?;
    let f = parser.implies()?;
    if parser.current != Tok::End {
        return parser.error("unexpected trailing input");
    }
    Ok(f)
}

/// Parses `text`, resolving atoms (and their aliases) against `alphabet`.
pub fn parse(text: &str, alphabet: &Alphabet) -> Result<Formula> {
    run(text, Some(alphabet))
}

/// Parses without an alphabet; any identifier is accepted as an atom.
pub fn parse_unchecked(text: &str) -> Result<Formula> {
    run(text, None)
}
