//! Concrete syntax for protocol files.
//!
//! ```text
//! const 0, 1.
//! key k : key^HH(LL * HH).
//! freename n0.
//! left  P = new r : HH^1 . out(enc(<0, r>, k)) . 0
//! right Q = new r : HH^1 . out(enc(<1, r>, k)) . 0
//! query equivalence
//! ```
//!
//! A single `process` declaration using `choice[M,N]` may replace the
//! `left`/`right` pair. `#` starts a comment running to the end of the line.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::process::{pair, BiProcess, DestApp, Proc, ShapeMismatch};
use crate::term::{Atom, AtomKind, Sym, Term};
use crate::types::{Label, Mult, NonceType, Type, TypeEnv};

/// Errors raised while loading a protocol file.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        line: usize,
        col: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("{line}:{col}: unknown identifier `{name}`")]
    Unbound {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("{line}:{col}: binder `{name}` clashes with a declared name")]
    DuplicateBinder {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("{line}:{col}: `{name}` declared twice")]
    DuplicateDeclaration {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("the file declares no process")]
    MissingProcess,
    #[error("the file declares a left process without a right one, or the converse")]
    UnmatchedSide,
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
}

/// The equivalence query of a file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Query {
    /// Equivalence of replication-free processes.
    Equivalence,
    /// Equivalence of `new n̄.((!P) | P')` for unboundedly many sessions.
    Replicated,
}

/// A parsed protocol file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolFile {
    /// Public constants, in declaration order.
    pub constants: Vec<Atom>,
    /// Attacker names, in declaration order.
    pub free_names: Vec<Atom>,
    /// Keys with their types, in declaration order.
    pub keys: Vec<(Atom, Type)>,
    /// The bi-process.
    pub process: BiProcess,
    /// The query.
    pub query: Query,
}

impl ProtocolFile {
    /// The environment binding every declared key.
    pub fn key_env(&self) -> TypeEnv {
        TypeEnv::from_pairs(self.keys.iter().cloned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: [&str; 18] = [
    "\\/", "(", ")", "[", "]", "{", "}", "<", ">", ",", ".", ";", ":", "=", "|", "!", "*", "^",
];

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if is_ident_char(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Token {
                tok: Tok::Ident(s),
                line,
                col,
            });
            col += i - start;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                out.push(Token {
                    tok: Tok::Punct(p),
                    line,
                    col,
                });
                i += p.len();
                col += p.len();
            }
            None => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    expected: vec!["a token".into()],
                    found: format!("`{c}`"),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

const TOP_KEYWORDS: [&str; 7] = [
    "const", "key", "freename", "left", "right", "process", "query",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    constants: HashMap<String, Atom>,
    free_names: HashMap<String, Atom>,
    keys: HashMap<String, Atom>,
    scope: Vec<(String, Atom)>,
    binder_counts: HashMap<String, u32>,
    allow_choice: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn found(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of file".into(),
        }
    }

    fn fail<T>(&self, expected: &[&str]) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError::Syntax {
            line,
            col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.found(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(q) if q == s)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, s: &str) -> bool {
        if self.is_ident(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.fail(&[&format!("`{p}`")])
        }
    }

    fn expect_keyword(&mut self, s: &str) -> PResult<()> {
        if self.eat_ident(s) {
            Ok(())
        } else {
            self.fail(&[&format!("`{s}`")])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail(&["identifier"]),
        }
    }

    fn at_top_keyword(&self) -> bool {
        match self.peek() {
            Tok::Ident(s) => TOP_KEYWORDS.contains(&s.as_str()),
            Tok::Eof => true,
            _ => false,
        }
    }

    fn declared(&self, name: &str) -> bool {
        self.constants.contains_key(name)
            || self.free_names.contains_key(name)
            || self.keys.contains_key(name)
    }

    fn declare(&mut self, kind: AtomKind, name: String, line: usize, col: usize) -> PResult<Atom> {
        if self.declared(&name) {
            return Err(ParseError::DuplicateDeclaration { line, col, name });
        }
        let atom = Atom::new(kind, &name);
        let table = match kind {
            AtomKind::Const => &mut self.constants,
            AtomKind::FreeNonce => &mut self.free_names,
            _ => &mut self.keys,
        };
        table.insert(name, atom.clone());
        Ok(atom)
    }

    fn bind(&mut self, kind: AtomKind, name: &str, line: usize, col: usize) -> PResult<Atom> {
        if self.declared(name) {
            return Err(ParseError::DuplicateBinder {
                line,
                col,
                name: name.to_string(),
            });
        }
        let n = self.binder_counts.entry(name.to_string()).or_insert(0);
        let atom = Atom::new(kind, name).with_fresh(*n);
        *n += 1;
        self.scope.push((name.to_string(), atom.clone()));
        Ok(atom)
    }

    fn lookup(&self, name: &str, line: usize, col: usize) -> PResult<Atom> {
        if let Some((_, a)) = self.scope.iter().rev().find(|(n, _)| n == name) {
            return Ok(a.clone());
        }
        self.constants
            .get(name)
            .or_else(|| self.free_names.get(name))
            .or_else(|| self.keys.get(name))
            .cloned()
            .ok_or(ParseError::Unbound {
                line,
                col,
                name: name.to_string(),
            })
    }

    fn key_atom(&mut self) -> PResult<Atom> {
        let (line, col) = self.here();
        let name = self.ident()?;
        self.keys
            .get(&name)
            .cloned()
            .ok_or(ParseError::Unbound { line, col, name })
    }

    fn label(&mut self) -> PResult<Label> {
        let l = match self.peek() {
            Tok::Ident(s) if s == "LL" => Label::LL,
            Tok::Ident(s) if s == "HL" => Label::HL,
            Tok::Ident(s) if s == "HH" => Label::HH,
            _ => return self.fail(&["`LL`", "`HL`", "`HH`"]),
        };
        self.pos += 1;
        Ok(l)
    }

    fn mult(&mut self) -> PResult<Mult> {
        let m = match self.peek() {
            Tok::Ident(s) if s == "1" => Mult::One,
            Tok::Ident(s) if s == "inf" => Mult::Inf,
            _ => return self.fail(&["`1`", "`inf`"]),
        };
        self.pos += 1;
        Ok(m)
    }

    fn type_atom_ref(&mut self) -> PResult<Atom> {
        let name = self.ident()?;
        Ok(self
            .constants
            .get(&name)
            .or_else(|| self.free_names.get(&name))
            .cloned()
            .unwrap_or_else(|| Atom::nonce(&name)))
    }

    fn nonce_type(&mut self) -> PResult<NonceType> {
        self.expect_keyword("t")?;
        self.expect_punct("{")?;
        let label = self.label()?;
        self.expect_punct(",")?;
        let mult = self.mult()?;
        self.expect_punct(",")?;
        let atom = self.type_atom_ref()?;
        self.expect_punct("}")?;
        Ok(NonceType::new(label, mult, atom))
    }

    fn ty(&mut self) -> PResult<Type> {
        let a = self.pair_ty()?;
        if self.eat_punct("\\/") {
            Ok(Type::union(a, self.ty()?))
        } else {
            Ok(a)
        }
    }

    fn pair_ty(&mut self) -> PResult<Type> {
        let a = self.atom_ty()?;
        if self.eat_punct("*") {
            Ok(Type::pair(a, self.pair_ty()?))
        } else {
            Ok(a)
        }
    }

    fn atom_ty(&mut self) -> PResult<Type> {
        if self.eat_punct("(") {
            let t = self.ty()?;
            self.expect_punct(")")?;
            return Ok(t);
        }
        if self.eat_punct("[") {
            let l = self.nonce_type()?;
            self.expect_punct(";")?;
            let r = self.nonce_type()?;
            self.expect_punct("]")?;
            return Ok(Type::refine(l, r));
        }
        match self.peek().clone() {
            Tok::Ident(s) if s == "LL" || s == "HL" || s == "HH" => Ok(Type::Label(self.label()?)),
            Tok::Ident(s) if s == "t" && matches!(self.peek_at(1), Tok::Punct("{")) => {
                Ok(Type::nonce(self.nonce_type()?))
            }
            Tok::Ident(s) if s == "key" => {
                self.pos += 1;
                self.expect_punct("^")?;
                let l = self.label()?;
                self.expect_punct("(")?;
                let t = self.ty()?;
                self.expect_punct(")")?;
                Ok(Type::key(l, t))
            }
            Tok::Ident(s) if s == "enc" || s == "aenc" => {
                self.pos += 1;
                self.expect_punct("(")?;
                let t = self.ty()?;
                self.expect_punct(",")?;
                let k = self.key_atom()?;
                self.expect_punct(")")?;
                Ok(if s == "enc" {
                    Type::enc(t, k)
                } else {
                    Type::aenc(t, k)
                })
            }
            _ => self.fail(&["type"]),
        }
    }

    fn term(&mut self) -> PResult<(Term, Term)> {
        if self.eat_punct("<") {
            let mut items = vec![self.term()?];
            while self.eat_punct(",") {
                items.push(self.term()?);
            }
            self.expect_punct(">")?;
            let (l, r): (Vec<Term>, Vec<Term>) = items.into_iter().unzip();
            return Ok((Term::tuple(l), Term::tuple(r)));
        }
        let (line, col) = self.here();
        let name = self.ident()?;
        if name == "choice" && self.is_punct("[") {
            if !self.allow_choice {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    expected: vec!["term".into()],
                    found: "`choice` outside a `process` declaration".into(),
                });
            }
            self.expect_punct("[")?;
            let (l, _) = self.term()?;
            self.expect_punct(",")?;
            let (_, r) = self.term()?;
            self.expect_punct("]")?;
            return Ok((l, r));
        }
        if self.is_punct("(") {
            let sym = Sym::from_name(&name).ok_or(ParseError::Unbound {
                line,
                col,
                name: name.clone(),
            })?;
            self.pos += 1;
            let mut args = vec![self.term()?];
            while self.eat_punct(",") {
                args.push(self.term()?);
            }
            self.expect_punct(")")?;
            if args.len() != sym.arity() {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    expected: vec![format!("{} argument(s) for {}", sym.arity(), name)],
                    found: format!("{}", args.len()),
                });
            }
            let (l, r): (Vec<Term>, Vec<Term>) = args.into_iter().unzip();
            return Ok((Term::app(sym, l), Term::app(sym, r)));
        }
        let a: Term = self.lookup(&name, line, col)?.into();
        Ok((a.clone(), a))
    }

    fn dest(&mut self) -> PResult<DestApp> {
        let (line, col) = self.here();
        let name = self.ident()?;
        let sym = match Sym::from_name(&name) {
            Some(s) if !s.is_constructor() => s,
            _ => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    expected: vec!["destructor".into()],
                    found: format!("`{name}`"),
                })
            }
        };
        self.expect_punct("(")?;
        let (line, col) = self.here();
        let y = self.ident()?;
        let arg = self.lookup(&y, line, col)?;
        if !arg.is_var() {
            return Err(ParseError::Syntax {
                line,
                col,
                expected: vec!["variable".into()],
                found: format!("`{y}`"),
            });
        }
        let key = if sym.arity() == 2 {
            self.expect_punct(",")?;
            if sym == Sym::CheckSign && self.eat_ident("vk") {
                self.expect_punct("(")?;
                let k = self.key_atom()?;
                self.expect_punct(")")?;
                Some(k)
            } else {
                Some(self.key_atom()?)
            }
        } else {
            None
        };
        self.expect_punct(")")?;
        Ok(DestApp { sym, arg, key })
    }

    fn par(&mut self) -> PResult<Proc<(Term, Term)>> {
        let mut p = self.prefix()?;
        while self.eat_punct("|") {
            let q = self.prefix()?;
            p = Proc::par(p, q);
        }
        Ok(p)
    }

    fn continuation(&mut self) -> PResult<Proc<(Term, Term)>> {
        if self.eat_punct(".") {
            if self.at_top_keyword() {
                return Ok(Proc::Zero);
            }
            self.prefix()
        } else {
            Ok(Proc::Zero)
        }
    }

    fn else_branch(&mut self) -> PResult<Proc<(Term, Term)>> {
        if self.eat_ident("else") {
            self.prefix()
        } else {
            Ok(Proc::Zero)
        }
    }

    fn scoped<T>(&mut self, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        let depth = self.scope.len();
        let r = f(self);
        self.scope.truncate(depth);
        r
    }

    fn prefix(&mut self) -> PResult<Proc<(Term, Term)>> {
        if self.eat_punct("(") {
            let p = self.par()?;
            self.expect_punct(")")?;
            return Ok(p);
        }
        if self.eat_punct("!") {
            return Ok(Proc::repl(self.prefix()?));
        }
        let (line, col) = self.here();
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.fail(&["process"]),
        };
        match kw.as_str() {
            "0" => {
                self.pos += 1;
                Ok(Proc::Zero)
            }
            "new" => {
                self.pos += 1;
                let (line, col) = self.here();
                let name = self.ident()?;
                self.expect_punct(":")?;
                let label = self.label()?;
                self.expect_punct("^")?;
                let mult = self.mult()?;
                self.scoped(|p| {
                    let atom = p.bind(AtomKind::BoundNonce, &name, line, col)?;
                    let cont = p.continuation()?;
                    Ok(Proc::new_nonce(NonceType::new(label, mult, atom), cont))
                })
            }
            "out" => {
                self.pos += 1;
                self.expect_punct("(")?;
                let m = self.term()?;
                self.expect_punct(")")?;
                let cont = self.continuation()?;
                Ok(Proc::out(m, cont))
            }
            "in" => {
                self.pos += 1;
                self.expect_punct("(")?;
                let (line, col) = self.here();
                let name = self.ident()?;
                self.expect_punct(")")?;
                self.scoped(|p| {
                    let x = p.bind(AtomKind::Var, &name, line, col)?;
                    let cont = p.continuation()?;
                    Ok(Proc::input(x, cont))
                })
            }
            "let" => {
                self.pos += 1;
                let (line, col) = self.here();
                let name = self.ident()?;
                self.expect_punct("=")?;
                let d = self.dest()?;
                self.expect_keyword("in")?;
                let (x, then) = self.scoped(|p| {
                    let x = p.bind(AtomKind::Var, &name, line, col)?;
                    Ok((x, p.prefix()?))
                })?;
                let els = self.else_branch()?;
                Ok(Proc::let_in(x, d, then, els))
            }
            "if" => {
                self.pos += 1;
                let a = self.term()?;
                self.expect_punct("=")?;
                let b = self.term()?;
                self.expect_keyword("then")?;
                let then = self.prefix()?;
                let els = self.else_branch()?;
                Ok(Proc::if_eq(a, b, then, els))
            }
            _ => Err(ParseError::Syntax {
                line,
                col,
                expected: vec!["process".into()],
                found: self.found(),
            }),
        }
    }

    fn process_decl(&mut self, choice: bool) -> PResult<BiProcess> {
        self.ident()?;
        self.expect_punct("=")?;
        self.scope.clear();
        self.binder_counts.clear();
        self.allow_choice = choice;
        let p = self.par()?;
        self.eat_punct(".");
        if !self.at_top_keyword() {
            return self.fail(&["`|`", "declaration", "end of file"]);
        }
        Ok(p)
    }

    fn name_list(&mut self, kind: AtomKind) -> PResult<Vec<Atom>> {
        let mut out = Vec::new();
        loop {
            let (line, col) = self.here();
            let name = self.ident()?;
            out.push(self.declare(kind, name, line, col)?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(".")?;
        Ok(out)
    }

    fn file(&mut self) -> PResult<ProtocolFile> {
        let mut constants = Vec::new();
        let mut free_names = Vec::new();
        let mut keys = Vec::new();
        let mut left = None;
        let mut right = None;
        let mut both = None;
        let mut query = Query::Equivalence;
        self.predeclare_keys()?;
        let key_atoms = std::mem::take(&mut self.keys);
        let mut seen_keys: HashSet<String> = HashSet::new();
        self.keys = key_atoms;
        loop {
            if matches!(self.peek(), Tok::Eof) {
                break;
            }
            let (line, col) = self.here();
            let kw = self.ident()?;
            match kw.as_str() {
                "const" => constants.extend(self.name_list(AtomKind::Const)?),
                "freename" => free_names.extend(self.name_list(AtomKind::FreeNonce)?),
                "key" => {
                    let (line, col) = self.here();
                    let name = self.ident()?;
                    if !seen_keys.insert(name.clone()) {
                        return Err(ParseError::DuplicateDeclaration { line, col, name });
                    }
                    self.expect_punct(":")?;
                    let t = self.ty()?;
                    self.expect_punct(".")?;
                    keys.push((self.keys[&name].clone(), t));
                }
                "left" => left = Some(self.process_decl(false)?),
                "right" => right = Some(self.process_decl(false)?),
                "process" => both = Some(self.process_decl(true)?),
                "query" => {
                    self.expect_keyword("equivalence")?;
                    query = if self.eat_ident("replicated") {
                        Query::Replicated
                    } else {
                        Query::Equivalence
                    };
                    self.eat_punct(".");
                }
                _ => {
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        expected: TOP_KEYWORDS.iter().map(|k| format!("`{k}`")).collect(),
                        found: format!("`{kw}`"),
                    })
                }
            }
        }
        let process = match (both, left, right) {
            (Some(b), None, None) => b,
            (None, Some(l), Some(r)) => pair(&l.erase_left(), &r.erase_left())?,
            (None, None, None) => return Err(ParseError::MissingProcess),
            _ => return Err(ParseError::UnmatchedSide),
        };
        Ok(ProtocolFile {
            constants,
            free_names,
            keys,
            process,
            query,
        })
    }

    fn predeclare_keys(&mut self) -> PResult<()> {
        let mut i = 0;
        while i + 2 < self.toks.len() {
            if let (Tok::Ident(k), Tok::Ident(name), Tok::Punct(":")) = (
                &self.toks[i].tok,
                &self.toks[i + 1].tok,
                &self.toks[i + 2].tok,
            ) {
                let at_start = i == 0 || matches!(self.toks[i - 1].tok, Tok::Punct("."));
                if k == "key" && at_start && !self.keys.contains_key(name) {
                    self.keys.insert(name.clone(), Atom::key(name));
                }
            }
            i += 1;
        }
        Ok(())
    }
}

/// Parses a protocol file.
pub fn parse(source: &str) -> Result<ProtocolFile, ParseError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
        constants: HashMap::new(),
        free_names: HashMap::new(),
        keys: HashMap::new(),
        scope: Vec::new(),
        binder_counts: HashMap::new(),
        allow_choice: false,
    };
    p.file()
}

/// Parses a type against a file's declarations, for tests and tooling.
pub fn parse_type(source: &str, constants: &[&str], keys: &[&str]) -> Result<Type, ParseError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
        constants: constants
            .iter()
            .map(|c| (c.to_string(), Atom::constant(c)))
            .collect(),
        free_names: HashMap::new(),
        keys: keys.iter().map(|k| (k.to_string(), Atom::key(k))).collect(),
        scope: Vec::new(),
        binder_counts: HashMap::new(),
        allow_choice: false,
    };
    let t = p.ty()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.fail(&["end of type"]);
    }
    Ok(t)
}
