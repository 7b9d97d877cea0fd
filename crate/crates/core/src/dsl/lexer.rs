use super::{DslError, Pos};

#[derive(Clone, Debug, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    // Keywords.
    Package,
    Import,
    Model,
    Random,
    Param,
    Laws,
    For,
    Is,
    Constrained,
    New,
    // Operators and punctuation.
    Tilde,
    Pipe,
    Elvis,
    Range,
    Dot,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Gt,
    Colon,
    Semi,
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
}

fn keyword(word: &str) -> Option<TokenKind> {
    Some(match word {
        "package" => TokenKind::Package,
        "import" => TokenKind::Import,
        "model" => TokenKind::Model,
        "random" => TokenKind::Random,
        "param" => TokenKind::Param,
        "laws" => TokenKind::Laws,
        "for" => TokenKind::For,
        "is" => TokenKind::Is,
        "Constrained" => TokenKind::Constrained,
        "new" => TokenKind::New,
        _ => return None,
    })
}

struct Cursor<'a> {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
    _src: &'a str,
}

impl Cursor<'_> {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }
}

/// Splits source text into tokens; the last token is always `Eof`.
pub fn tokenize(source: &str) -> Result<Vec<Token>, DslError> {
    let mut c = Cursor { chars: source.chars().collect(), i: 0, line: 1, col: 1, _src: source };
    let mut out = Vec::new();
    while let Some(ch) = c.peek(0) {
        let pos = c.pos();
        if ch.is_whitespace() {
            c.bump();
            continue;
        }
        if ch == '/' && c.peek(1) == Some('/') {
            while let Some(x) = c.peek(0) {
                if x == '\n' {
                    break;
                }
                c.bump();
            }
            continue;
        }
        if ch == '/' && c.peek(1) == Some('*') {
            c.bump();
            c.bump();
            loop {
                match c.peek(0) {
                    None => return Err(DslError::at(pos, "unterminated comment")),
                    Some('*') if c.peek(1) == Some('/') => {
                        c.bump();
                        c.bump();
                        break;
                    }
                    _ => {
                        c.bump();
                    }
                }
            }
            continue;
        }
        if ch == '"' {
            c.bump();
            let mut s = String::new();
            loop {
                match c.bump() {
                    None | Some('\n') => return Err(DslError::at(pos, "unterminated string")),
                    Some('"') => break,
                    Some(x) => s.push(x),
                }
            }
            out.push(Token { kind: TokenKind::Str(s), pos });
            continue;
        }
        if ch.is_ascii_digit() {
            out.push(Token { kind: number(&mut c, pos)?, pos });
            continue;
        }
        if ch.is_alphabetic() || ch == '_' {
            let mut word = String::new();
            while let Some(x) = c.peek(0) {
                if x.is_alphanumeric() || x == '_' {
                    word.push(x);
                    c.bump();
                } else {
                    break;
                }
            }
            let kind = keyword(&word).unwrap_or(TokenKind::Ident(word));
            out.push(Token { kind, pos });
            continue;
        }
        let two = |a: char, b: char| ch == a && c.peek(1) == Some(b);
        let (kind, len) = if ch == '.' && c.peek(1) == Some('.') && c.peek(2) == Some('<') {
            (TokenKind::Range, 3)
        } else if two('?', ':') {
            (TokenKind::Elvis, 2)
        } else {
            let k = match ch {
                '~' => TokenKind::Tilde,
                '|' => TokenKind::Pipe,
                '.' => TokenKind::Dot,
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                '{' => TokenKind::LBrace,
                '}' => TokenKind::RBrace,
                ',' => TokenKind::Comma,
                '=' => TokenKind::Assign,
                '+' => TokenKind::Plus,
                '-' => TokenKind::Minus,
                '*' => TokenKind::Star,
                '/' => TokenKind::Slash,
                '<' => TokenKind::Lt,
                '>' => TokenKind::Gt,
                ':' => TokenKind::Colon,
                ';' => TokenKind::Semi,
                other => return Err(DslError::at(pos, format!("illegal character `{other}`"))),
            };
            (k, 1)
        };
        for _ in 0..len {
            c.bump();
        }
        out.push(Token { kind, pos });
    }
    out.push(Token { kind: TokenKind::Eof, pos: c.pos() });
    Ok(out)
}

fn number(c: &mut Cursor, pos: Pos) -> Result<TokenKind, DslError> {
    let mut text = String::new();
    let digits = |c: &mut Cursor, text: &mut String| {
        while let Some(x) = c.peek(0).filter(char::is_ascii_digit) {
            text.push(x);
            c.bump();
        }
    };
    digits(c, &mut text);
    let mut real = false;
    if c.peek(0) == Some('.') && c.peek(1).is_some_and(|x| x.is_ascii_digit()) {
        real = true;
        text.push('.');
        c.bump();
        digits(c, &mut text);
    }
    if matches!(c.peek(0), Some('e' | 'E')) {
        let sign = matches!(c.peek(1), Some('+' | '-'));
        let first = if sign { c.peek(2) } else { c.peek(1) };
        if first.is_some_and(|x| x.is_ascii_digit()) {
            real = true;
            text.push('e');
            c.bump();
            if sign {
                text.push(c.bump().unwrap_or('+'));
            }
            digits(c, &mut text);
        }
    }
    if real {
        text.parse().map(TokenKind::Real).map_err(|_| DslError::at(pos, format!("bad number `{text}`")))
    } else {
        text.parse().map(TokenKind::Int).map_err(|_| DslError::at(pos, format!("integer out of range `{text}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TokenKind::*;

    fn kinds(s: &str) -> Vec<TokenKind> {
        tokenize(s).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn law_tokens() {
        let id = |s: &str| Ident(s.to_string());
        assert_eq!(
            kinds("z | rate ~ Exponential(rate)"),
            vec![id("z"), Pipe, id("rate"), Tilde, id("Exponential"), LParen, id("rate"), RParen, Eof]
        );
    }

    #[test]
    fn ranges_and_numbers() {
        assert_eq!(kinds("0 ..< 10"), vec![Int(0), Range, Int(10), Eof]);
        assert_eq!(kinds("1.5e-3 2E2 7"), vec![Real(1.5e-3), Real(200.0), Int(7), Eof]);
        assert_eq!(kinds("x ?: 1 // note\n/* block\n */ y"), vec![Ident("x".into()), Elvis, Int(1), Ident("y".into()), Eof]);
    }

    #[test]
    fn errors_carry_positions() {
        let e = tokenize("/* x").unwrap_err();
        assert_eq!(e.to_string(), "1:1: unterminated comment");
        let e = tokenize("a\n  #").unwrap_err();
        assert_eq!(e.to_string(), "2:3: illegal character `#`");
        assert!(tokenize("\"abc").is_err());
    }
}
