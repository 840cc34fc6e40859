//! CIR: the compact textual SSA intermediate representation consumed by all
//! analyses. A program is a set of class declarations, extern (signature-only)
//! library APIs, and function bodies in SSA form.

mod ast;
mod info;
mod parse;
mod print;
mod validate;

pub use ast::*;
pub use info::{CallTarget, ProgramInfo, ValueDef};
pub use parse::{parse_program, parse_program_named, ParseError};
pub use print::{print_inst, print_program};
pub use validate::{validate_program, Diagnostic};

/// True iff a value of type `from` may stand in for a value of type `to`:
/// identity, subclass/implementor relation in either direction, or both
/// numeric primitives.
pub fn is_castable(from: &TypeRef, to: &TypeRef, info: &ProgramInfo) -> bool {
    if from == to {
        return true;
    }
    if from.is_numeric() && to.is_numeric() {
        return true;
    }
    match (from, to) {
        (TypeRef::Class(a), TypeRef::Class(b)) => {
            info.is_subtype_of(a, b) || info.is_subtype_of(b, a)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> (Program, ProgramInfo) {
        let src = r#"
extern class Cipher
class SubCipher extends Cipher { }
class SubSub extends SubCipher { }
func @main() -> void { bb0: ret }
"#;
        let p = parse_program(src).unwrap();
        let info = ProgramInfo::build(&p);
        (p, info)
    }

    #[test]
    fn castable_identity() {
        let (_, info) = demo();
        assert!(is_castable(&TypeRef::Str, &TypeRef::Str, &info));
    }

    #[test]
    fn castable_string_int_incompatible() {
        let (_, info) = demo();
        assert!(!is_castable(&TypeRef::Str, &TypeRef::Int, &info));
    }

    #[test]
    fn castable_subclass_transitive() {
        let (_, info) = demo();
        let sub = TypeRef::Class("SubSub".into());
        let sup = TypeRef::Class("Cipher".into());
        // Transitive closure over declared inheritance edges, both directions.
        assert!(is_castable(&sub, &sup, &info));
        assert!(is_castable(&sup, &sub, &info));
    }

    #[test]
    fn castable_numeric() {
        let (_, info) = demo();
        assert!(is_castable(&TypeRef::Int, &TypeRef::Long, &info));
        assert!(!is_castable(&TypeRef::Int, &TypeRef::Bytes, &info));
    }
}
