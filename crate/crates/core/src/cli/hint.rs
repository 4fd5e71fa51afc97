//! `Leading(...)` join-order hints.
//!
//! A join node is written `(L R)` with a single space when both children
//! are relation names and no separator otherwise, so `((a b) c)` renders as
//! `((a b)c)`. When the root has a composite child its own parentheses are
//! the ones of `Leading(...)`: `Leading((a(b c))(d e))`. A root over two
//! names keeps them: `Leading((a b))`.

use crate::catalog::PlanTree;
use crate::error::{Error, Result};

fn write_node(plan: &PlanTree, out: &mut String) {
    match plan {
        PlanTree::Leaf(name) => out.push_str(name),
        PlanTree::Join(l, r) => {
            out.push('(');
            write_children(l, r, out);
            out.push(')');
        }
    }
}

fn write_children(l: &PlanTree, r: &PlanTree, out: &mut String) {
    write_node(l, out);
    if matches!((l, r), (PlanTree::Leaf(_), PlanTree::Leaf(_))) {
        out.push(' ');
    }
    write_node(r, out);
}

pub fn emit_hint(plan: &PlanTree) -> String {
    let mut out = String::from("Leading(");
    match plan {
        PlanTree::Join(l, r) if !(l.is_leaf() && r.is_leaf()) => write_children(l, r, &mut out),
        _ => write_node(plan, &mut out),
    }
    out.push(')');
    out
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Hint { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.text[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => Err(self.err(format!("expected `{c}`, found `{got}`"))),
            None => Err(self.err(format!("expected `{c}`, found end of input"))),
        }
    }

    fn node(&mut self) -> Result<PlanTree> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let l = self.node()?;
                let r = self.node()?;
                self.expect(')')?;
                Ok(PlanTree::join(l, r))
            }
            Some(c) if is_name_char(c) => {
                let start = self.pos;
                while self.text[self.pos..].chars().next().is_some_and(is_name_char) {
                    self.pos += self.text[self.pos..].chars().next().unwrap().len_utf8();
                }
                Ok(PlanTree::leaf(&self.text[start..self.pos]))
            }
            Some(c) => Err(self.err(format!("unexpected `{c}`"))),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Inverse of [`emit_hint`]; whitespace between tokens is ignored.
pub fn parse_hint(text: &str) -> Result<PlanTree> {
    let mut p = Parser { text, pos: 0 };
    p.skip_ws();
    if !p.text[p.pos..].starts_with("Leading") {
        return Err(p.err("expected `Leading`"));
    }
    p.pos += "Leading".len();
    p.expect('(')?;
    let first = p.node()?;
    let plan = if p.peek() == Some(')') {
        first
    } else {
        PlanTree::join(first, p.node()?)
    };
    p.expect(')')?;
    if let Some(c) = p.peek() {
        return Err(p.err(format!("trailing `{c}`")));
    }
    if plan.is_leaf() {
        return Err(Error::Hint { pos: 0, msg: "hint must join at least two relations".into() });
    }
    Ok(plan)
}
