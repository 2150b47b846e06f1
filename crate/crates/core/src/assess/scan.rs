//! A small lexical/structural scanner for Python-like candidate sources.
//!
//! It does not parse the language. It recovers two structures that the
//! extraction rules need: call sites (dotted callee plus positional and
//! keyword arguments) and top-level assignments. Comments and layout are
//! discarded, so results are insensitive to whitespace and comment edits.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScanError {
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unbalanced '{0}' at byte {1}")]
    Unbalanced(char, usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    Punct(char),
    /// Multi-character operators such as `==`, `<=`, `->`.
    Op(String),
    Newline,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    tok: Tok,
    offset: usize,
}

/// Argument or right-hand-side expression, reduced to what is statically known.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Str(String),
    Num(String),
    /// A bare (possibly dotted) name such as `torch.float16`.
    Name(String),
    /// A call whose result is the whole expression, e.g. `X.from_config(..)`.
    Call(String),
    Other,
}

impl Expr {
    /// Literal text of the expression; `None` for anything computed.
    pub fn literal(&self) -> Option<&str> {
        match self {
            Expr::Str(s) | Expr::Num(s) | Expr::Name(s) => Some(s),
            Expr::Call(_) | Expr::Other => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallSite {
    pub callee: String,
    pub offset: usize,
    pub positional: Vec<Expr>,
    pub keywords: Vec<(String, Expr)>,
}

impl CallSite {
    pub fn keyword(&self, name: &str) -> Option<&Expr> {
        self.keywords.iter().rev().find(|(k, _)| k == name).map(|(_, e)| e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub target: String,
    pub value: Expr,
    pub offset: usize,
}

/// Call sites and assignments of one source, in source order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceModel {
    pub calls: Vec<CallSite>,
    pub assignments: Vec<Assignment>,
    /// Byte offsets of statements that start with `raise`.
    pub raises: Vec<usize>,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Str(s) => write!(f, "{s:?}"),
            Expr::Num(s) | Expr::Name(s) => f.write_str(s),
            Expr::Call(c) => write!(f, "{c}(..)"),
            Expr::Other => f.write_str("<expr>"),
        }
    }
}

const STRING_PREFIXES: [&str; 10] = ["r", "b", "f", "u", "rb", "br", "fr", "rf", "R", "B"];

fn tokenize(src: &str) -> Result<Vec<Token>, ScanError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '\\' if bytes.get(i + 1) == Some(&b'\n') => i += 2,
            '#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '\n' => {
                out.push(Token { tok: Tok::Newline, offset: i });
                i += 1;
            }
            '"' | '\'' => {
                let (s, next) = read_string(src, i, false)?;
                out.push(Token { tok: Tok::Str(s), offset: i });
                i = next;
            }
            c if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) => {
                let start = i;
                while i < bytes.len() {
                    let b = bytes[i] as char;
                    let exp_sign = (b == '-' || b == '+') && matches!(bytes[i - 1], b'e' | b'E');
                    if b.is_ascii_alphanumeric() || b == '.' || b == '_' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Num(src[start..i].replace('_', "")), offset: start });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                // Non-ASCII identifiers: advance to a char boundary.
                while !src.is_char_boundary(i) {
                    i += 1;
                }
                let word = &src[start..i];
                if matches!(bytes.get(i), Some(b'"' | b'\'')) && STRING_PREFIXES.contains(&word) {
                    let raw = word.contains(['r', 'R']);
                    let (s, next) = read_string(src, i, raw)?;
                    out.push(Token { tok: Tok::Str(s), offset: start });
                    i = next;
                } else {
                    out.push(Token { tok: Tok::Ident(word.to_string()), offset: start });
                }
            }
            _ => {
                let two = src.get(i..i + 2).unwrap_or("");
                if matches!(two, "==" | "!=" | "<=" | ">=" | "->" | ":=" | "**" | "//" | "+=" | "-=" | "*=" | "/=") {
                    out.push(Token { tok: Tok::Op(two.to_string()), offset: i });
                    i += 2;
                } else {
                    let ch = src[i..].chars().next().expect("in bounds");
                    out.push(Token { tok: Tok::Punct(ch), offset: i });
                    i += ch.len_utf8();
                }
            }
        }
    }
    Ok(out)
}

/// Reads a string literal whose opening quote is at `start`. Returns the
/// decoded contents (escapes kept verbatim except `\\` and quotes) and the
/// index after the closing quote.
fn read_string(src: &str, start: usize, raw: bool) -> Result<(String, usize), ScanError> {
    let bytes = src.as_bytes();
    let quote = bytes[start];
    let triple = bytes.get(start + 1) == Some(&quote) && bytes.get(start + 2) == Some(&quote);
    let mut i = if triple { start + 3 } else { start + 1 };
    let mut out = String::new();
    loop {
        if i >= bytes.len() {
            return Err(ScanError::UnterminatedString(start));
        }
        let b = bytes[i];
        if b == b'\\' && !raw {
            if let Some(&n) = bytes.get(i + 1) {
                if n == quote || n == b'\\' {
                    out.push(n as char);
                    i += 2;
                    continue;
                }
            }
        }
        if b == b'\n' && !triple {
            return Err(ScanError::UnterminatedString(start));
        }
        if b == quote {
            if !triple {
                return Ok((out, i + 1));
            }
            if bytes.get(i + 1) == Some(&quote) && bytes.get(i + 2) == Some(&quote) {
                return Ok((out, i + 3));
            }
        }
        let ch = src[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
}

fn closing(open: char) -> char {
    match open {
        '(' => ')',
        '[' => ']',
        _ => '}',
    }
}

fn check_balance(tokens: &[Token]) -> Result<(), ScanError> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    for t in tokens {
        if let Tok::Punct(c) = t.tok {
            match c {
                '(' | '[' | '{' => stack.push((c, t.offset)),
                ')' | ']' | '}' => match stack.pop() {
                    Some((open, _)) if closing(open) == c => {}
                    _ => return Err(ScanError::Unbalanced(c, t.offset)),
                },
                _ => {}
            }
        }
    }
    match stack.pop() {
        Some((open, offset)) => Err(ScanError::Unbalanced(open, offset)),
        None => Ok(()),
    }
}

/// Reads a dotted name starting at `i`; returns it and the index after it.
fn dotted_at(tokens: &[Token], mut i: usize) -> Option<(String, usize)> {
    let Tok::Ident(first) = &tokens.get(i)?.tok else {
        return None;
    };
    let mut name = first.clone();
    i += 1;
    while let (Some(Tok::Punct('.')), Some(Tok::Ident(next))) =
        (tokens.get(i).map(|t| &t.tok), tokens.get(i + 1).map(|t| &t.tok))
    {
        name.push('.');
        name.push_str(next);
        i += 2;
    }
    Some((name, i))
}

/// Index of the bracket matching the opener at `open`. Input is balanced.
fn matching(tokens: &[Token], open: usize) -> usize {
    let mut depth = 0usize;
    for (j, t) in tokens.iter().enumerate().skip(open) {
        match t.tok {
            Tok::Punct('(' | '[' | '{') => depth += 1,
            Tok::Punct(')' | ']' | '}') => {
                depth -= 1;
                if depth == 0 {
                    return j;
                }
            }
            _ => {}
        }
    }
    tokens.len() - 1
}

fn classify(tokens: &[Token]) -> Expr {
    let toks: Vec<&Tok> = tokens.iter().map(|t| &t.tok).filter(|t| **t != Tok::Newline).collect();
    match toks.as_slice() {
        [Tok::Str(s)] => return Expr::Str(s.clone()),
        [Tok::Num(n)] => return Expr::Num(n.clone()),
        [Tok::Punct('-'), Tok::Num(n)] => return Expr::Num(format!("-{n}")),
        _ => {}
    }
    // Adjacent string literals concatenate.
    if !toks.is_empty() && toks.iter().all(|t| matches!(t, Tok::Str(_))) {
        let joined = toks
            .iter()
            .map(|t| match t {
                Tok::Str(s) => s.as_str(),
                _ => unreachable!(),
            })
            .collect();
        return Expr::Str(joined);
    }
    let non_nl: Vec<Token> = tokens.iter().filter(|t| t.tok != Tok::Newline).cloned().collect();
    if let Some((name, end)) = dotted_at(&non_nl, 0) {
        if end == non_nl.len() {
            return Expr::Name(name);
        }
        if non_nl[end].tok == Tok::Punct('(') && matching(&non_nl, end) == non_nl.len() - 1 {
            return Expr::Call(name);
        }
    }
    Expr::Other
}

/// Splits the tokens strictly between brackets on top-level commas.
fn split_args(tokens: &[Token]) -> Vec<&[Token]> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (j, t) in tokens.iter().enumerate() {
        match t.tok {
            Tok::Punct('(' | '[' | '{') => depth += 1,
            Tok::Punct(')' | ']' | '}') => depth = depth.saturating_sub(1),
            Tok::Punct(',') if depth == 0 => {
                parts.push(&tokens[start..j]);
                start = j + 1;
            }
            _ => {}
        }
    }
    parts.push(&tokens[start..]);
    parts
        .into_iter()
        .filter(|p| p.iter().any(|t| t.tok != Tok::Newline))
        .collect()
}

fn parse_call(tokens: &[Token], callee_start: usize, callee: String, open: usize) -> CallSite {
    let close = matching(tokens, open);
    let mut call = CallSite {
        callee,
        offset: tokens[callee_start].offset,
        positional: Vec::new(),
        keywords: Vec::new(),
    };
    for arg in split_args(&tokens[open + 1..close]) {
        let first = arg.iter().position(|t| t.tok != Tok::Newline).unwrap_or(0);
        let arg = &arg[first..];
        match (arg.first().map(|t| &t.tok), arg.get(1).map(|t| &t.tok)) {
            (Some(Tok::Ident(k)), Some(Tok::Punct('='))) => {
                call.keywords.push((k.clone(), classify(&arg[2..])));
            }
            (Some(Tok::Punct('*')), _) | (Some(Tok::Op(_)), _) => {}
            _ => call.positional.push(classify(arg)),
        }
    }
    call
}

/// Scans `src` into its call sites and assignments.
pub fn scan(src: &str) -> Result<SourceModel, ScanError> {
    let tokens = tokenize(src)?;
    check_balance(&tokens)?;
    let mut model = SourceModel::default();
    let mut depth = 0usize;
    let mut at_statement_start = true;
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i].tok;
        if at_statement_start && depth == 0 {
            if let Tok::Ident(word) = tok {
                if word == "raise" {
                    model.raises.push(tokens[i].offset);
                }
            }
            if let Some((target, end)) = dotted_at(&tokens, i) {
                if tokens.get(end).map(|t| &t.tok) == Some(&Tok::Punct('=')) {
                    let mut stop = end + 1;
                    let mut d = 0usize;
                    while stop < tokens.len() {
                        match tokens[stop].tok {
                            Tok::Punct('(' | '[' | '{') => d += 1,
                            Tok::Punct(')' | ']' | '}') => d = d.saturating_sub(1),
                            Tok::Newline | Tok::Punct(';') if d == 0 => break,
                            _ => {}
                        }
                        stop += 1;
                    }
                    model.assignments.push(Assignment {
                        target,
                        value: classify(&tokens[end + 1..stop]),
                        offset: tokens[i].offset,
                    });
                }
            }
        }
        at_statement_start = false;
        match tok {
            Tok::Newline | Tok::Punct(';') if depth == 0 => at_statement_start = true,
            Tok::Punct(':') if depth == 0 => at_statement_start = true,
            Tok::Punct('(' | '[' | '{') => depth += 1,
            Tok::Punct(')' | ']' | '}') => depth = depth.saturating_sub(1),
            Tok::Ident(_) => {
                let chained = i > 0 && tokens[i - 1].tok == Tok::Punct('.');
                if let Some((name, end)) = dotted_at(&tokens, i) {
                    if tokens.get(end).map(|t| &t.tok) == Some(&Tok::Punct('(')) {
                        let callee = if chained { format!(".{name}") } else { name };
                        model.calls.push(parse_call(&tokens, i, callee, end));
                    }
                    // Skip the rest of the dotted name so `a.b(` is not
                    // also reported as `.b(`.
                    i = end;
                    continue;
                }
            }
            _ => {}
        }
        i += 1;
    }
    Ok(model)
}
