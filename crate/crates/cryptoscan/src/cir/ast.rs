use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeRef {
    Int,
    Long,
    Bool,
    Bytes,
    Str,
    Class(String),
    /// Result type of an unresolvable extern call. Never parsed from source.
    Unknown,
}

impl TypeRef {
    pub fn is_numeric(&self) -> bool {
        matches!(self, TypeRef::Int | TypeRef::Long)
    }

    pub fn class_name(&self) -> Option<&str> {
        match self {
            TypeRef::Class(n) => Some(n),
            _ => None,
        }
    }

    /// Name used for virtual-method resolution on this receiver type.
    pub fn receiver_name(&self) -> Option<&str> {
        match self {
            TypeRef::Class(n) => Some(n),
            TypeRef::Str => Some("String"),
            _ => None,
        }
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Int => write!(f, "int"),
            TypeRef::Long => write!(f, "long"),
            TypeRef::Bool => write!(f, "bool"),
            TypeRef::Bytes => write!(f, "bytes"),
            TypeRef::Str => write!(f, "String"),
            TypeRef::Class(n) => write!(f, "{n}"),
            TypeRef::Unknown => write!(f, "<unknown>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    pub fields: Vec<(String, TypeRef)>,
    pub static_init: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExternDecl {
    Class(String),
    Func {
        name: String,
        params: Vec<TypeRef>,
        ret: Option<TypeRef>,
        is_static: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerEntry {
    pub caught_type: TypeRef,
    pub start_block: String,
    pub end_block: String,
    pub handler_block: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub insts: Vec<Inst>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<(String, TypeRef)>,
    pub ret: Option<TypeRef>,
    pub blocks: Vec<BasicBlock>,
    pub handlers: Vec<HandlerEntry>,
    /// Source file the function was parsed from (empty for synthesized code).
    pub file: String,
}

impl FunctionDef {
    /// A function whose first parameter is the receiver `%this` is an
    /// instance method of that parameter's declared class.
    pub fn is_instance(&self) -> bool {
        self.params.first().map(|(n, _)| n == "this").unwrap_or(false)
    }

    /// Unqualified method name (`Crypto.method1` -> `method1`).
    pub fn method_name(&self) -> &str {
        self.name.rsplit('.').next().unwrap_or(&self.name)
    }

    /// Declaring class for a class-qualified function name, if any.
    pub fn class_name(&self) -> Option<&str> {
        self.name.rsplit_once('.').map(|(c, _)| c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inst {
    ConstStr { dst: String, value: String },
    ConstInt { dst: String, value: i64 },
    Load { dst: String, src: String },
    Store { value: String, ptr: String },
    BitCast { dst: String, src: String, ty: TypeRef },
    Phi { dst: String, ty: TypeRef, arms: Vec<(String, String)> },
    GetField { dst: String, obj: String, field: String },
    PutField { obj: String, field: String, value: String },
    GetStatic { dst: String, class: String, field: String },
    PutStatic { class: String, field: String, value: String },
    New { dst: String, ty: TypeRef },
    CallStatic { dst: Option<String>, callee: String, args: Vec<String> },
    CallVirtual { dst: Option<String>, recv: String, method: String, args: Vec<String> },
    Ret { value: Option<String> },
    Br { target: String },
    CondBr { cond: String, then_bb: String, else_bb: String },
    Throw { value: String },
}

impl Inst {
    pub fn defined_value(&self) -> Option<&str> {
        match self {
            Inst::ConstStr { dst, .. }
            | Inst::ConstInt { dst, .. }
            | Inst::Load { dst, .. }
            | Inst::BitCast { dst, .. }
            | Inst::Phi { dst, .. }
            | Inst::GetField { dst, .. }
            | Inst::GetStatic { dst, .. }
            | Inst::New { dst, .. } => Some(dst),
            Inst::CallStatic { dst, .. } | Inst::CallVirtual { dst, .. } => dst.as_deref(),
            _ => None,
        }
    }

    /// Values read by this instruction. Phi arms are reported here as well
    /// even though they are only live on their own incoming edge.
    pub fn used_values(&self) -> Vec<&str> {
        match self {
            Inst::ConstStr { .. } | Inst::ConstInt { .. } | Inst::New { .. } | Inst::Br { .. } => {
                vec![]
            }
            Inst::Load { src, .. } => vec![src],
            Inst::Store { value, ptr } => vec![value, ptr],
            Inst::BitCast { src, .. } => vec![src],
            Inst::Phi { arms, .. } => arms.iter().map(|(v, _)| v.as_str()).collect(),
            Inst::GetField { obj, .. } => vec![obj],
            Inst::PutField { obj, value, .. } => vec![obj, value],
            Inst::GetStatic { .. } => vec![],
            Inst::PutStatic { value, .. } => vec![value],
            Inst::CallStatic { args, .. } => args.iter().map(|a| a.as_str()).collect(),
            Inst::CallVirtual { recv, args, .. } => {
                let mut v = vec![recv.as_str()];
                v.extend(args.iter().map(|a| a.as_str()));
                v
            }
            Inst::Ret { value } => value.iter().map(|v| v.as_str()).collect(),
            Inst::CondBr { cond, .. } => vec![cond],
            Inst::Throw { value } => vec![value],
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Inst::Ret { .. } | Inst::Br { .. } | Inst::CondBr { .. } | Inst::Throw { .. }
        )
    }

    pub fn is_phi(&self) -> bool {
        matches!(self, Inst::Phi { .. })
    }

    pub fn is_call(&self) -> bool {
        matches!(self, Inst::CallStatic { .. } | Inst::CallVirtual { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
    pub functions: Vec<FunctionDef>,
    pub externs: Vec<ExternDecl>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn extern_func(&self, name: &str) -> Option<&ExternDecl> {
        self.externs
            .iter()
            .find(|e| matches!(e, ExternDecl::Func { name: n, .. } if n == name))
    }

    pub fn extern_class(&self, name: &str) -> bool {
        self.externs
            .iter()
            .any(|e| matches!(e, ExternDecl::Class(n) if n == name))
    }

    /// Merge declarations from another parsed unit into this program.
    pub fn merge(&mut self, other: Program) {
        self.classes.extend(other.classes);
        self.functions.extend(other.functions);
        for e in other.externs {
            // Identical extern redeclarations across files are tolerated.
            if !self.externs.contains(&e) {
                self.externs.push(e);
            }
        }
    }
}

/// A stable reference to one instruction in a validated program.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct Location {
    pub func: String,
    pub block: String,
    pub index: usize,
}

impl Location {
    pub fn new(func: impl Into<String>, block: impl Into<String>, index: usize) -> Self {
        Location { func: func.into(), block: block.into(), index }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{} {}:{}", self.func, self.block, self.index)
    }
}
