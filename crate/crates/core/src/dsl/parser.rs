use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::{DslError, Pos};

struct Parser {
    tokens: Vec<Token>,
    i: usize,
}

type PResult<T> = Result<T, DslError>;

fn describe(kind: &TokenKind) -> String {
    use TokenKind::*;
    match kind {
        Ident(s) => format!("identifier `{s}`"),
        Int(k) => format!("integer `{k}`"),
        Real(x) => format!("number `{x}`"),
        Str(s) => format!("string \"{s}\""),
        Eof => "end of input".into(),
        other => {
            let s = match other {
                Package => "package",
                Import => "import",
                Model => "model",
                Random => "random",
                Param => "param",
                Laws => "laws",
                For => "for",
                Is => "is",
                Constrained => "Constrained",
                New => "new",
                Tilde => "~",
                Pipe => "|",
                Elvis => "?:",
                Range => "..<",
                Dot => ".",
                LParen => "(",
                RParen => ")",
                LBrace => "{",
                RBrace => "}",
                Comma => ",",
                Assign => "=",
                Plus => "+",
                Minus => "-",
                Star => "*",
                Slash => "/",
                Lt => "<",
                Gt => ">",
                Colon => ":",
                Semi => ";",
                _ => unreachable!(),
            };
            format!("`{s}`")
        }
    }
}

impl Parser {
    fn peek(&self) -> &TokenKind {
        &self.tokens[self.i].kind
    }

    fn peek_at(&self, k: usize) -> &TokenKind {
        let j = (self.i + k).min(self.tokens.len() - 1);
        &self.tokens[j].kind
    }

    fn pos(&self) -> Pos {
        self.tokens[self.i].pos
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.i].clone();
        if self.i + 1 < self.tokens.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &str) -> DslError {
        DslError::at(self.pos(), format!("expected {expected}, found {}", describe(self.peek())))
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<Pos> {
        let pos = self.pos();
        if self.eat(&kind) {
            Ok(pos)
        } else {
            Err(self.unexpected(&describe(&kind)))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            TokenKind::Ident(s) => {
                self.advance();
                Ok((s, pos))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn qualified_name(&mut self) -> PResult<String> {
        let (mut name, _) = self.ident()?;
        while self.peek() == &TokenKind::Dot {
            self.advance();
            if self.eat(&TokenKind::Star) {
                name.push_str(".*");
                break;
            }
            name.push('.');
            name.push_str(&self.ident()?.0);
        }
        Ok(name)
    }

    fn model(&mut self) -> PResult<ModelAst> {
        let package = if self.eat(&TokenKind::Package) { Some(self.qualified_name()?) } else { None };
        let mut imports = Vec::new();
        while self.eat(&TokenKind::Import) {
            let mut words = Vec::new();
            while let TokenKind::Ident(w) = self.peek() {
                if (w == "static" || w == "extension") && matches!(self.peek_at(1), TokenKind::Ident(_)) {
                    words.push(w.clone());
                    self.advance();
                } else {
                    break;
                }
            }
            words.push(self.qualified_name()?);
            imports.push(words.join(" "));
        }
        self.expect(TokenKind::Model)?;
        let (name, _) = self.ident()?;
        self.expect(TokenKind::LBrace)?;
        let mut decls: Vec<Decl> = Vec::new();
        let mut laws = None;
        loop {
            match self.peek() {
                TokenKind::Random | TokenKind::Param => {
                    let d = self.decl()?;
                    if decls.iter().any(|e| e.name == d.name) {
                        return Err(DslError::at(d.pos, format!("duplicate declaration of `{}`", d.name)));
                    }
                    decls.push(d);
                }
                TokenKind::Laws => {
                    let pos = self.pos();
                    self.advance();
                    if laws.is_some() {
                        return Err(DslError::at(pos, "duplicate laws block"));
                    }
                    self.expect(TokenKind::LBrace)?;
                    laws = Some(self.laws_until_brace()?);
                }
                TokenKind::RBrace => {
                    let pos = self.pos();
                    self.advance();
                    let laws = laws.ok_or_else(|| DslError::at(pos, format!("model `{name}` has no laws block")))?;
                    if self.peek() != &TokenKind::Eof {
                        return Err(DslError::at(self.pos(), "expected end of input: exactly one model per file"));
                    }
                    return Ok(ModelAst { package, imports, name, decls, laws });
                }
                _ => return Err(self.unexpected("`random`, `param`, `laws` or `}`")),
            }
        }
    }

    fn type_name(&mut self) -> PResult<TypeName> {
        let (base, pos) = self.ident()?;
        let arg = if self.eat(&TokenKind::Lt) {
            let (a, _) = self.ident()?;
            self.expect(TokenKind::Gt)?;
            Some(a)
        } else {
            None
        };
        TypeName::from_parts(&base, arg.as_deref()).ok_or_else(|| {
            let full = match &arg {
                Some(a) => format!("{base}<{a}>"),
                None => base.clone(),
            };
            DslError::at(pos, format!("unknown type `{full}`"))
        })
    }

    fn decl(&mut self) -> PResult<Decl> {
        let random = self.advance().kind == TokenKind::Random;
        let ty = self.type_name()?;
        let (name, pos) = self.ident()?;
        let init = if self.eat(&TokenKind::Elvis) { Some(self.expr()?) } else { None };
        Ok(Decl { random, ty, name, init, pos })
    }

    fn laws_until_brace(&mut self) -> PResult<Vec<Law>> {
        let mut out = Vec::new();
        while !self.eat(&TokenKind::RBrace) {
            if self.peek() == &TokenKind::Eof {
                return Err(self.unexpected("`}`"));
            }
            out.push(self.law()?);
        }
        Ok(out)
    }

    fn law(&mut self) -> PResult<Law> {
        let pos = self.pos();
        if self.eat(&TokenKind::For) {
            self.expect(TokenKind::LParen)?;
            // Optional iterator type: `int i`, `Integer i`.
            if matches!(self.peek_at(1), TokenKind::Ident(_)) {
                self.ident()?;
            }
            let (var, _) = self.ident()?;
            self.expect(TokenKind::Colon)?;
            let from = self.expr()?;
            self.expect(TokenKind::Range)?;
            let to = self.expr()?;
            self.expect(TokenKind::RParen)?;
            self.expect(TokenKind::LBrace)?;
            let body = self.laws_until_brace()?;
            return Ok(Law::Loop(Loop { var, from, to, body, pos }));
        }
        if matches!(self.peek(), TokenKind::Ident(_)) && self.peek_at(1) == &TokenKind::Is {
            let (v, _) = self.ident()?;
            self.advance();
            self.expect(TokenKind::Constrained)?;
            return Ok(Law::Constrained(v, pos));
        }
        let mut targets = Vec::new();
        if matches!(self.peek(), TokenKind::Ident(_)) {
            targets.push(self.place()?);
            while self.eat(&TokenKind::Comma) {
                targets.push(self.place()?);
            }
        }
        let mut conditioners = Vec::new();
        if self.eat(&TokenKind::Pipe) {
            conditioners.push(self.conditioner()?);
            while self.eat(&TokenKind::Comma) {
                conditioners.push(self.conditioner()?);
            }
        }
        if targets.is_empty() && conditioners.is_empty() {
            return Err(self.unexpected("a law"));
        }
        self.expect(TokenKind::Tilde)?;
        let (distribution, _) = self.ident()?;
        let args = if self.eat(&TokenKind::LParen) { Some(self.args_until_paren()?) } else { None };
        Ok(Law::Composite(CompositeLaw { targets, conditioners, distribution, args, pos }))
    }

    fn place(&mut self) -> PResult<Place> {
        let (name, pos) = self.ident()?;
        let index = if self.peek() == &TokenKind::Dot {
            self.advance();
            let (m, mpos) = self.ident()?;
            if m != "get" {
                return Err(DslError::at(mpos, format!("expected `get`, found `{m}`")));
            }
            self.expect(TokenKind::LParen)?;
            let e = self.expr()?;
            self.expect(TokenKind::RParen)?;
            Some(e)
        } else {
            None
        };
        Ok(Place { name, index, pos })
    }

    fn conditioner(&mut self) -> PResult<Conditioner> {
        let pos = self.pos();
        let typed = matches!(self.peek(), TokenKind::Ident(_))
            && (matches!(self.peek_at(1), TokenKind::Ident(_)) || self.peek_at(1) == &TokenKind::Lt);
        if typed {
            let ty = self.type_name()?;
            let (name, _) = self.ident()?;
            self.expect(TokenKind::Assign)?;
            let value = self.expr()?;
            Ok(Conditioner::Binding { ty, name, value, pos })
        } else {
            let (name, pos) = self.ident()?;
            Ok(Conditioner::Name(name, pos))
        }
    }

    fn args_until_paren(&mut self) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if self.eat(&TokenKind::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&TokenKind::RParen) {
                return Ok(args);
            }
            if !self.eat(&TokenKind::Comma) {
                return Err(self.unexpected("`,` or `)`"));
            }
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&TokenKind::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.peek() == &TokenKind::Dot {
            self.advance();
            let (m, pos) = self.ident()?;
            match m.as_str() {
                "get" => {
                    self.expect(TokenKind::LParen)?;
                    let i = self.expr()?;
                    self.expect(TokenKind::RParen)?;
                    e = Expr::Get(Box::new(e), Box::new(i));
                }
                "size" => {
                    // `x.size()` and `x.size` are both accepted.
                    if self.eat(&TokenKind::LParen) {
                        self.expect(TokenKind::RParen)?;
                    }
                    e = Expr::Size(Box::new(e));
                }
                other => return Err(DslError::at(pos, format!("unknown member `{other}`"))),
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            TokenKind::Int(k) => {
                self.advance();
                Ok(Expr::Int(k))
            }
            TokenKind::Real(x) => {
                self.advance();
                Ok(Expr::Real(x))
            }
            TokenKind::Ident(name) => {
                self.advance();
                if self.eat(&TokenKind::LParen) {
                    Ok(Expr::Call(name, self.args_until_paren()?, pos))
                } else {
                    Ok(Expr::Ident(name, pos))
                }
            }
            TokenKind::New => {
                self.advance();
                let (ty, _) = self.ident()?;
                self.expect(TokenKind::LParen)?;
                Ok(Expr::New(ty, self.args_until_paren()?))
            }
            TokenKind::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

/// Parses one `.bl` model file.
pub fn parse_model(source: &str) -> Result<ModelAst, DslError> {
    let tokens = tokenize(source)?;
    Parser { tokens, i: 0 }.model()
}
