//! Hand-rolled lexer and recursive-descent parser for the CIR text format.

use super::ast::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    /// Bare identifier, possibly dot-qualified (`javax.crypto.Cipher`).
    Ident(String),
    /// `%name` local value reference.
    Value(String),
    /// `@name` function reference, possibly dot-qualified.
    FuncRef(String),
    Str(String),
    Int(i64),
    Sym(char),
    Arrow,   // ->
    Assign,  // <-
    DotDot,  // ..
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, msg: msg.into() }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(b';') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                _ => break,
            }
        }
    }

    /// Undotted identifier: local value names and block labels.
    fn simple_ident(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            let c = c as char;
            if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn ident(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            let c = c as char;
            if c.is_ascii_alphanumeric() || c == '_' || c == '$' || c == '<' || c == '>' {
                s.push(c);
                self.bump();
            } else if c == '.' {
                // A dot continues a qualified identifier only when followed by
                // an identifier character; `..` and `. f` stay separate.
                match self.peek2() {
                    Some(n) if (n as char).is_ascii_alphanumeric() || n == b'_' || n == b'<' => {
                        s.push('.');
                        self.bump();
                    }
                    _ => break,
                }
            } else {
                break;
            }
        }
        s
    }

    fn next(&mut self) -> Result<(Tok, usize, usize), ParseError> {
        self.skip_ws();
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, line, col));
        };
        let tok = match c {
            b'%' => {
                self.bump();
                let name = self.simple_ident();
                if name.is_empty() {
                    return Err(self.err("expected value name after '%'"));
                }
                Tok::Value(name)
            }
            b'@' => {
                self.bump();
                let name = self.ident();
                if name.is_empty() {
                    return Err(self.err("expected function name after '@'"));
                }
                Tok::FuncRef(name)
            }
            b'"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err("unterminated string literal")),
                        Some(b'"') => break,
                        Some(b'\\') => match self.bump() {
                            Some(b'n') => s.push('\n'),
                            Some(b't') => s.push('\t'),
                            Some(b'"') => s.push('"'),
                            Some(b'\\') => s.push('\\'),
                            _ => return Err(self.err("bad escape in string literal")),
                        },
                        Some(c) => s.push(c as char),
                    }
                }
                Tok::Str(s)
            }
            b'-' if self.peek2() == Some(b'>') => {
                self.bump();
                self.bump();
                Tok::Arrow
            }
            b'-' => {
                self.bump();
                let n = self.ident();
                let v: i64 = n
                    .parse()
                    .map_err(|_| self.err("expected integer after '-'"))?;
                Tok::Int(-v)
            }
            b'<' if self.peek2() == Some(b'-') => {
                self.bump();
                self.bump();
                Tok::Assign
            }
            b'.' if self.peek2() == Some(b'.') => {
                self.bump();
                self.bump();
                Tok::DotDot
            }
            b'0'..=b'9' => {
                let n = self.ident();
                match n.parse::<i64>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => return Err(self.err(format!("bad integer literal '{n}'"))),
                }
            }
            c if (c as char).is_ascii_alphabetic() || c == b'_' || c == b'<' => {
                Tok::Ident(self.ident())
            }
            c => {
                self.bump();
                Tok::Sym(c as char)
            }
        };
        Ok((tok, line, col))
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    file: String,
}

impl Parser {
    fn cur(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn loc(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.1, t.2)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.loc();
        ParseError { line, col, msg: msg.into() }
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_sym(&mut self, c: char) -> Result<(), ParseError> {
        match self.cur() {
            Tok::Sym(s) if *s == c => {
                self.advance();
                Ok(())
            }
            t => Err(self.err(format!("expected '{c}', found {t:?}"))),
        }
    }

    fn eat_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.cur() {
            Tok::Ident(s) if s == kw => {
                self.advance();
                Ok(())
            }
            t => Err(self.err(format!("expected '{kw}', found {t:?}"))),
        }
    }

    fn try_kw(&mut self, kw: &str) -> bool {
        if matches!(self.cur(), Tok::Ident(s) if s == kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.advance() {
            Tok::Ident(s) => Ok(s),
            t => Err(self.err(format!("expected identifier, found {t:?}"))),
        }
    }

    fn value(&mut self) -> Result<String, ParseError> {
        match self.advance() {
            Tok::Value(s) => Ok(s),
            t => Err(self.err(format!("expected %value, found {t:?}"))),
        }
    }

    fn func_ref(&mut self) -> Result<String, ParseError> {
        match self.advance() {
            Tok::FuncRef(s) => Ok(s),
            t => Err(self.err(format!("expected @function, found {t:?}"))),
        }
    }

    fn type_ref(&mut self) -> Result<TypeRef, ParseError> {
        let name = self.ident()?;
        Ok(match name.as_str() {
            "int" => TypeRef::Int,
            "long" => TypeRef::Long,
            "bool" => TypeRef::Bool,
            "bytes" => TypeRef::Bytes,
            "String" => TypeRef::Str,
            _ => TypeRef::Class(name),
        })
    }

    fn ret_type(&mut self) -> Result<Option<TypeRef>, ParseError> {
        if self.try_kw("void") {
            Ok(None)
        } else {
            Ok(Some(self.type_ref()?))
        }
    }

    /// Splits `Pkg.Class.field` at the last dot.
    fn static_ref(&mut self) -> Result<(String, String), ParseError> {
        let q = self.ident()?;
        match q.rsplit_once('.') {
            Some((c, f)) => Ok((c.to_string(), f.to_string())),
            None => Err(self.err(format!("expected Class.field reference, found '{q}'"))),
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut p = Program::default();
        loop {
            match self.cur() {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "class" => {
                        let c = self.class_decl()?;
                        p.classes.push(c);
                    }
                    "extern" => {
                        let e = self.extern_decl()?;
                        p.externs.push(e);
                    }
                    "func" => {
                        let f = self.func_decl()?;
                        p.functions.push(f);
                    }
                    other => return Err(self.err(format!("unexpected '{other}' at top level"))),
                },
                t => return Err(self.err(format!("unexpected {t:?} at top level"))),
            }
        }
        Ok(p)
    }

    fn class_decl(&mut self) -> Result<ClassDecl, ParseError> {
        self.eat_kw("class")?;
        let name = self.ident()?;
        let mut superclass = None;
        let mut interfaces = Vec::new();
        if self.try_kw("extends") {
            superclass = Some(self.ident()?);
        }
        if self.try_kw("implements") {
            interfaces.push(self.ident()?);
            while matches!(self.cur(), Tok::Sym(',')) {
                self.advance();
                interfaces.push(self.ident()?);
            }
        }
        self.eat_sym('{')?;
        let mut fields = Vec::new();
        let mut static_init = None;
        loop {
            if self.try_kw("field") {
                let fname = self.ident()?;
                self.eat_sym(':')?;
                let ty = self.type_ref()?;
                fields.push((fname, ty));
            } else if self.try_kw("staticinit") {
                static_init = Some(self.func_ref()?);
            } else {
                break;
            }
        }
        self.eat_sym('}')?;
        Ok(ClassDecl { name, superclass, interfaces, fields, static_init })
    }

    fn extern_decl(&mut self) -> Result<ExternDecl, ParseError> {
        self.eat_kw("extern")?;
        if self.try_kw("class") {
            return Ok(ExternDecl::Class(self.ident()?));
        }
        self.eat_kw("func")?;
        let name = self.func_ref()?;
        self.eat_sym('(')?;
        let mut params = Vec::new();
        if !matches!(self.cur(), Tok::Sym(')')) {
            params.push(self.type_ref()?);
            while matches!(self.cur(), Tok::Sym(',')) {
                self.advance();
                params.push(self.type_ref()?);
            }
        }
        self.eat_sym(')')?;
        match self.advance() {
            Tok::Arrow => {}
            t => return Err(self.err(format!("expected '->', found {t:?}"))),
        }
        let ret = self.ret_type()?;
        let is_static = self.try_kw("static");
        Ok(ExternDecl::Func { name, params, ret, is_static })
    }

    fn func_decl(&mut self) -> Result<FunctionDef, ParseError> {
        self.eat_kw("func")?;
        let name = self.func_ref()?;
        self.eat_sym('(')?;
        let mut params = Vec::new();
        if !matches!(self.cur(), Tok::Sym(')')) {
            loop {
                let pname = self.value()?;
                self.eat_sym(':')?;
                let ty = self.type_ref()?;
                params.push((pname, ty));
                if matches!(self.cur(), Tok::Sym(',')) {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.eat_sym(')')?;
        match self.advance() {
            Tok::Arrow => {}
            t => return Err(self.err(format!("expected '->', found {t:?}"))),
        }
        let ret = self.ret_type()?;
        self.eat_sym('{')?;
        let mut blocks = Vec::new();
        while let Tok::Ident(label) = self.cur() {
            if label == "handler" {
                break;
            }
            let label = label.clone();
            self.advance();
            self.eat_sym(':')?;
            let mut insts = Vec::new();
            loop {
                match self.cur() {
                    // A bare identifier followed by ':' starts the next block.
                    Tok::Ident(w)
                        if w != "handler"
                            && !is_inst_keyword(w)
                            && matches!(self.toks.get(self.pos + 1).map(|t| &t.0), Some(Tok::Sym(':'))) =>
                    {
                        break
                    }
                    Tok::Sym('}') | Tok::Eof => break,
                    Tok::Ident(w) if w == "handler" => break,
                    _ => insts.push(self.inst()?),
                }
            }
            blocks.push(BasicBlock { label, insts });
        }
        let mut handlers = Vec::new();
        while self.try_kw("handler") {
            self.eat_sym('(')?;
            let caught_type = self.type_ref()?;
            self.eat_sym(')')?;
            self.eat_kw("from")?;
            let start_block = self.ident()?;
            match self.advance() {
                Tok::DotDot => {}
                t => return Err(self.err(format!("expected '..', found {t:?}"))),
            }
            let end_block = self.ident()?;
            self.eat_kw("to")?;
            let handler_block = self.ident()?;
            handlers.push(HandlerEntry { caught_type, start_block, end_block, handler_block });
        }
        self.eat_sym('}')?;
        Ok(FunctionDef { name, params, ret, blocks, handlers, file: self.file.clone() })
    }

    fn args(&mut self) -> Result<Vec<String>, ParseError> {
        self.eat_sym('(')?;
        let mut args = Vec::new();
        if !matches!(self.cur(), Tok::Sym(')')) {
            args.push(self.value()?);
            while matches!(self.cur(), Tok::Sym(',')) {
                self.advance();
                args.push(self.value()?);
            }
        }
        self.eat_sym(')')?;
        Ok(args)
    }

    fn inst(&mut self) -> Result<Inst, ParseError> {
        match self.cur().clone() {
            Tok::Value(dst) => {
                self.advance();
                self.eat_sym('=')?;
                let op = self.ident()?;
                match op.as_str() {
                    "const.str" => match self.advance() {
                        Tok::Str(value) => Ok(Inst::ConstStr { dst, value }),
                        t => Err(self.err(format!("expected string literal, found {t:?}"))),
                    },
                    "const.int" => match self.advance() {
                        Tok::Int(value) => Ok(Inst::ConstInt { dst, value }),
                        t => Err(self.err(format!("expected integer literal, found {t:?}"))),
                    },
                    "load" => Ok(Inst::Load { dst, src: self.value()? }),
                    "bitcast" => {
                        let src = self.value()?;
                        self.eat_sym(':')?;
                        Ok(Inst::BitCast { dst, src, ty: self.type_ref()? })
                    }
                    "phi" => {
                        let ty = self.type_ref()?;
                        let mut arms = Vec::new();
                        loop {
                            self.eat_sym('[')?;
                            let v = self.value()?;
                            self.eat_sym(',')?;
                            let label = self.ident()?;
                            self.eat_sym(']')?;
                            arms.push((v, label));
                            if matches!(self.cur(), Tok::Sym(',')) {
                                self.advance();
                            } else {
                                break;
                            }
                        }
                        Ok(Inst::Phi { dst, ty, arms })
                    }
                    "getfield" => {
                        let obj = self.value()?;
                        self.eat_sym('.')?;
                        Ok(Inst::GetField { dst, obj, field: self.ident()? })
                    }
                    "getstatic" => {
                        let (class, field) = self.static_ref()?;
                        Ok(Inst::GetStatic { dst, class, field })
                    }
                    "new" => Ok(Inst::New { dst, ty: self.type_ref()? }),
                    "call" => {
                        let callee = self.func_ref()?;
                        Ok(Inst::CallStatic { dst: Some(dst), callee, args: self.args()? })
                    }
                    "callv" => {
                        let recv = self.value()?;
                        self.eat_sym('.')?;
                        let method = self.ident()?;
                        Ok(Inst::CallVirtual { dst: Some(dst), recv, method, args: self.args()? })
                    }
                    other => Err(self.err(format!("unknown instruction '{other}'"))),
                }
            }
            Tok::Ident(op) => {
                self.advance();
                match op.as_str() {
                    "store" => {
                        let value = self.value()?;
                        match self.advance() {
                            Tok::Arrow => {}
                            t => return Err(self.err(format!("expected '->', found {t:?}"))),
                        }
                        Ok(Inst::Store { value, ptr: self.value()? })
                    }
                    "putfield" => {
                        let obj = self.value()?;
                        self.eat_sym('.')?;
                        let field = self.ident()?;
                        match self.advance() {
                            Tok::Assign => {}
                            t => return Err(self.err(format!("expected '<-', found {t:?}"))),
                        }
                        Ok(Inst::PutField { obj, field, value: self.value()? })
                    }
                    "putstatic" => {
                        let (class, field) = self.static_ref()?;
                        match self.advance() {
                            Tok::Assign => {}
                            t => return Err(self.err(format!("expected '<-', found {t:?}"))),
                        }
                        Ok(Inst::PutStatic { class, field, value: self.value()? })
                    }
                    "call" => {
                        let callee = self.func_ref()?;
                        Ok(Inst::CallStatic { dst: None, callee, args: self.args()? })
                    }
                    "callv" => {
                        let recv = self.value()?;
                        self.eat_sym('.')?;
                        let method = self.ident()?;
                        Ok(Inst::CallVirtual { dst: None, recv, method, args: self.args()? })
                    }
                    "ret" => {
                        if let Tok::Value(_) = self.cur() {
                            Ok(Inst::Ret { value: Some(self.value()?) })
                        } else {
                            Ok(Inst::Ret { value: None })
                        }
                    }
                    "br" => Ok(Inst::Br { target: self.ident()? }),
                    "condbr" => {
                        let cond = self.value()?;
                        self.eat_sym(',')?;
                        let then_bb = self.ident()?;
                        self.eat_sym(',')?;
                        let else_bb = self.ident()?;
                        Ok(Inst::CondBr { cond, then_bb, else_bb })
                    }
                    "throw" => Ok(Inst::Throw { value: self.value()? }),
                    other => Err(self.err(format!("unknown instruction '{other}'"))),
                }
            }
            t => Err(self.err(format!("expected instruction, found {t:?}"))),
        }
    }
}

fn is_inst_keyword(w: &str) -> bool {
    matches!(
        w,
        "store" | "putfield" | "putstatic" | "call" | "callv" | "ret" | "br" | "condbr" | "throw"
    )
}

/// Parses CIR source into a structurally complete [`Program`]. No partial
/// results: any syntax error aborts the parse.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    parse_program_named(text, "")
}

/// Like [`parse_program`], recording `file` as the source of every function.
pub fn parse_program_named(text: &str, file: &str) -> Result<Program, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut toks = Vec::new();
    loop {
        let t = lexer.next()?;
        let eof = t.0 == Tok::Eof;
        toks.push(t);
        if eof {
            break;
        }
    }
    let mut parser = Parser { toks, pos: 0, file: file.to_string() };
    parser.program()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_program("func @main() -> void { bb0: ret }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].blocks.len(), 1);
        assert_eq!(p.functions[0].blocks[0].insts, vec![Inst::Ret { value: None }]);
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_program("func @main() -> void { bb0: bogus }").unwrap_err();
        assert!(err.msg.contains("bogus"), "{err}");
        assert_eq!(err.line, 1);
    }

    #[test]
    fn parses_all_instruction_kinds() {
        let src = r#"
extern class javax.crypto.Cipher
extern func @javax.crypto.Cipher.getInstance(String) -> javax.crypto.Cipher static
class Holder { field key: bytes staticinit @Holder.clinit }
func @Holder.clinit() -> void { bb0: %c = const.str "k" putstatic Holder.key <- %c ret }
func @main(%p: int) -> void {
  bb0:
    %s = const.str "AES"
    %n = const.int 42
    %h = new Holder
    putfield %h .key <- %s
    %k = getfield %h .key
    %g = getstatic Holder.key
    %b = bitcast %n : long
    store %b -> %p
    %l = load %p
    %c = call @javax.crypto.Cipher.getInstance(%s)
    callv %c .init(%k)
    condbr %p, bb1, bb2
  bb1:
    br bb3
  bb2:
    %e = new javax.crypto.Cipher
    throw %e
  bb3:
    %ph = phi bytes [%k, bb1]
    ret
  handler (javax.crypto.Cipher) from bb0 .. bb2 to bb3
}
"#;
        let p = parse_program(src).unwrap();
        assert_eq!(p.functions.len(), 2);
        let main = p.function("main").unwrap();
        assert_eq!(main.handlers.len(), 1);
        assert_eq!(main.blocks.len(), 4);
    }
}
