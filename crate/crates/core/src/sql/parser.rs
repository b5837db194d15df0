//! Recursive-descent parser for:
//!
//! ```text
//! query    := SELECT items FROM from [WHERE expr] [GROUP BY cols]
//!             [ORDER BY order (, order)*] [LIMIT int] [;]
//! items    := '*' | item (, item)*
//! item     := (column | agg '(' ('*' | column) ')') [[AS] ident]
//! from     := table ((, table) | ([INNER] JOIN table ON expr))*
//! table    := ident [[AS] ident]
//! expr     := and (OR and)*
//! and      := not (AND not)*
//! not      := NOT not | cmp
//! cmp      := operand [op operand]
//! operand  := column | literal | '(' expr ')'
//! order    := (int | column | agg call) [ASC | DESC]
//! ```

use super::ast::*;
use super::lexer::{tokenize, Keyword, Token, TokenKind};
use crate::error::{Error, Result};

pub fn parse_query(sql: &str) -> Result<Query> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens, pos: 0 };
    let q = p.query()?;
    p.eat(&TokenKind::Semicolon);
    if !matches!(p.peek().kind, TokenKind::Eof) {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(q)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> &TokenKind {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: &str) -> Error {
        let t = self.peek();
        let found = match &t.kind {
            TokenKind::Eof => "end of input".to_string(),
            k => format!("{k:?}"),
        };
        Error::Syntax {
            token: t.index,
            offset: t.offset,
            message: format!("{message}, found {found}"),
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if &self.peek().kind == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        self.eat(&TokenKind::Keyword(kw))
    }

    fn expect_kw(&mut self, kw: Keyword) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {}", format!("{kw:?}").to_uppercase())))
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<()> {
        if self.eat(&kind) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match &self.peek().kind {
            TokenKind::Ident(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(&format!("expected {what}"))),
        }
    }

    fn query(&mut self) -> Result<Query> {
        self.expect_kw(Keyword::Select)?;
        let select = self.select_list()?;
        self.expect_kw(Keyword::From)?;
        let from = self.parse_from_list()?;
        let selection = if self.eat_kw(Keyword::Where) {
            Some(self.expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_kw(Keyword::Group) {
            self.expect_kw(Keyword::By)?;
            loop {
                group_by.push(self.column_ref()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        if matches!(self.peek().kind, TokenKind::Keyword(Keyword::Having)) {
            return Err(self.error("HAVING is not supported"));
        }
        let mut order_by = Vec::new();
        if self.eat_kw(Keyword::Order) {
            self.expect_kw(Keyword::By)?;
            loop {
                order_by.push(self.order_item()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let limit = if self.eat_kw(Keyword::Limit) {
            match self.peek().kind {
                TokenKind::Int(n) if n >= 0 => {
                    self.advance();
                    Some(n as u64)
                }
                _ => return Err(self.error("expected a nonnegative integer after LIMIT")),
            }
        } else {
            None
        };
        Ok(Query {
            select,
            from,
            selection,
            group_by,
            order_by,
            limit,
        })
    }

    fn select_list(&mut self) -> Result<Vec<SelectItem>> {
        if self.eat(&TokenKind::Star) {
            return Ok(vec![SelectItem::Wildcard]);
        }
        let mut items = Vec::new();
        loop {
            let expr = if self.at_agg_call() {
                SelectExpr::Aggregate(self.agg_call()?)
            } else {
                match self.peek().kind {
                    TokenKind::Ident(_) => SelectExpr::Column(self.column_ref()?),
                    _ => return Err(self.error("expected a column or aggregate")),
                }
            };
            let alias = self.alias()?;
            items.push(SelectItem::Item { expr, alias });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(items)
    }

    fn alias(&mut self) -> Result<Option<String>> {
        if self.eat_kw(Keyword::As) {
            return self.ident("an alias").map(Some);
        }
        if let TokenKind::Ident(s) = &self.peek().kind {
            let s = s.clone();
            self.advance();
            return Ok(Some(s));
        }
        Ok(None)
    }

    fn at_agg_call(&self) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(name) if AggFunc::from_name(name).is_some())
            && matches!(self.peek_at(1), TokenKind::LParen)
    }

    fn agg_call(&mut self) -> Result<AggCall> {
        let name = self.ident("an aggregate")?;
        let func = AggFunc::from_name(&name).expect("checked by at_agg_call");
        self.expect(TokenKind::LParen, "'('")?;
        let arg = if self.eat(&TokenKind::Star) {
            if func != AggFunc::Count {
                return Err(self.error(&format!("{}(*) is not supported", func.name())));
            }
            None
        } else {
            Some(self.column_ref()?)
        };
        self.expect(TokenKind::RParen, "')'")?;
        Ok(AggCall { func, arg })
    }

    fn column_ref(&mut self) -> Result<ColumnRef> {
        let first = self.ident("a column name")?;
        if self.eat(&TokenKind::Dot) {
            let name = self.ident("a column name after '.'")?;
            Ok(ColumnRef {
                qualifier: Some(first),
                name,
            })
        } else {
            Ok(ColumnRef {
                qualifier: None,
                name: first,
            })
        }
    }

    fn parse_from_list(&mut self) -> Result<Vec<FromItem>> {
        let mut items = vec![self.table_ref(None)?];
        loop {
            if self.eat(&TokenKind::Comma) {
                items.push(self.table_ref(None)?);
            } else if matches!(
                self.peek().kind,
                TokenKind::Keyword(Keyword::Join) | TokenKind::Keyword(Keyword::Inner)
            ) {
                self.eat_kw(Keyword::Inner);
                self.expect_kw(Keyword::Join)?;
                let mut item = self.table_ref(None)?;
                self.expect_kw(Keyword::On)?;
                item.join_on = Some(self.expr()?);
                items.push(item);
            } else {
                break;
            }
        }
        Ok(items)
    }

    fn table_ref(&mut self, join_on: Option<AstExpr>) -> Result<FromItem> {
        let table = self.ident("a table name")?;
        let alias = self.alias()?;
        Ok(FromItem {
            table,
            alias,
            join_on,
        })
    }

    fn order_item(&mut self) -> Result<OrderItem> {
        let target = match self.peek().kind.clone() {
            TokenKind::Int(n) => {
                self.advance();
                OrderTarget::Ordinal(n as u64)
            }
            TokenKind::Ident(_) if self.at_agg_call() => OrderTarget::Aggregate(self.agg_call()?),
            TokenKind::Ident(_) => OrderTarget::Column(self.column_ref()?),
            _ => return Err(self.error("expected an ORDER BY term")),
        };
        let desc = if self.eat_kw(Keyword::Desc) {
            true
        } else {
            self.eat_kw(Keyword::Asc);
            false
        };
        Ok(OrderItem { target, desc })
    }

    fn expr(&mut self) -> Result<AstExpr> {
        let mut left = self.and_expr()?;
        while self.eat_kw(Keyword::Or) {
            let right = self.and_expr()?;
            left = AstExpr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<AstExpr> {
        let mut left = self.not_expr()?;
        while self.eat_kw(Keyword::And) {
            let right = self.not_expr()?;
            left = AstExpr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<AstExpr> {
        if self.eat_kw(Keyword::Not) {
            return Ok(AstExpr::Not(Box::new(self.not_expr()?)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<AstExpr> {
        let left = self.operand()?;
        let op = match self.peek().kind {
            TokenKind::Eq => CmpOp::Eq,
            TokenKind::Ne => CmpOp::Ne,
            TokenKind::Lt => CmpOp::Lt,
            TokenKind::Le => CmpOp::Le,
            TokenKind::Gt => CmpOp::Gt,
            TokenKind::Ge => CmpOp::Ge,
            _ => return Ok(left),
        };
        self.advance();
        let right = self.operand()?;
        Ok(AstExpr::Compare {
            op,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    fn operand(&mut self) -> Result<AstExpr> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                Ok(e)
            }
            TokenKind::Ident(_) => Ok(AstExpr::Column(self.column_ref()?)),
            TokenKind::Int(n) => {
                self.advance();
                Ok(AstExpr::Literal(Literal::Int(n)))
            }
            TokenKind::Float(text) => {
                self.advance();
                let v: f64 = text.parse().map_err(|_| Error::Syntax {
                    token: tok.index,
                    offset: tok.offset,
                    message: format!("bad number {text}"),
                })?;
                Ok(AstExpr::Literal(Literal::Float(v)))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(AstExpr::Literal(Literal::Str(s)))
            }
            TokenKind::Keyword(Keyword::True) => {
                self.advance();
                Ok(AstExpr::Literal(Literal::Bool(true)))
            }
            TokenKind::Keyword(Keyword::False) => {
                self.advance();
                Ok(AstExpr::Literal(Literal::Bool(false)))
            }
            TokenKind::Keyword(Keyword::Date) => {
                self.advance();
                match self.peek().kind.clone() {
                    TokenKind::Str(s) => {
                        self.advance();
                        Ok(AstExpr::Literal(Literal::Date(s)))
                    }
                    _ => Err(self.error("expected a quoted date after DATE")),
                }
            }
            TokenKind::Minus => {
                self.advance();
                match self.operand()? {
                    AstExpr::Literal(Literal::Int(n)) => Ok(AstExpr::Literal(Literal::Int(-n))),
                    AstExpr::Literal(Literal::Float(v)) => Ok(AstExpr::Literal(Literal::Float(-v))),
                    _ => Err(Error::Syntax {
                        token: tok.index,
                        offset: tok.offset,
                        message: "'-' must precede a number".into(),
                    }),
                }
            }
            _ => Err(self.error("expected an operand")),
        }
    }
}
