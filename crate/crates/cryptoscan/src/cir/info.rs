//! Derived, immutable views over a parsed [`Program`]: class-hierarchy
//! closure, per-value types, CFG predecessors, and call-target resolution.
//! Built leniently so the validator can report problems instead of panicking.

use super::ast::*;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueDef {
    pub ty: TypeRef,
    /// None for formal parameters.
    pub def: Option<Location>,
}

/// How a callsite resolves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallTarget {
    /// One or more declared function bodies (virtual calls may have several).
    Bodies(Vec<String>),
    /// Signature-only library API; `decl` is present when an extern func of
    /// that qualified name was declared.
    Extern { qualified: String, declared: bool },
}

#[derive(Debug)]
pub struct ProgramInfo {
    /// class -> set of transitive supertypes (classes + interfaces), self included.
    supertypes: BTreeMap<String, BTreeSet<String>>,
    /// declared class names (not extern).
    declared_classes: BTreeSet<String>,
    extern_classes: BTreeSet<String>,
    /// function name -> index into program.functions.
    pub fn_index: BTreeMap<String, usize>,
    /// per function: value name -> type + def site.
    values: BTreeMap<String, BTreeMap<String, ValueDef>>,
    /// per function: block label -> predecessors (terminator edges only).
    preds: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    /// every field name mentioned anywhere (decls and field instructions).
    pub field_universe: BTreeSet<String>,
    /// every (class, field) pair touched by getstatic/putstatic.
    pub static_roots: BTreeSet<(String, String)>,
}

impl ProgramInfo {
    pub fn build(p: &Program) -> Self {
        let declared_classes: BTreeSet<String> = p.classes.iter().map(|c| c.name.clone()).collect();
        let extern_classes: BTreeSet<String> = p
            .externs
            .iter()
            .filter_map(|e| match e {
                ExternDecl::Class(n) => Some(n.clone()),
                _ => None,
            })
            .collect();

        let mut supertypes: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for c in &p.classes {
            let mut seen = BTreeSet::new();
            let mut stack = vec![c.name.clone()];
            while let Some(n) = stack.pop() {
                if !seen.insert(n.clone()) {
                    continue;
                }
                if let Some(decl) = p.class(&n) {
                    if let Some(s) = &decl.superclass {
                        stack.push(s.clone());
                    }
                    for i in &decl.interfaces {
                        stack.push(i.clone());
                    }
                }
            }
            supertypes.insert(c.name.clone(), seen);
        }
        for e in &extern_classes {
            supertypes.insert(e.clone(), BTreeSet::from([e.clone()]));
        }

        let fn_index: BTreeMap<String, usize> =
            p.functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();

        let mut field_universe = BTreeSet::new();
        for c in &p.classes {
            for (f, _) in &c.fields {
                field_universe.insert(f.clone());
            }
        }
        let mut static_roots = BTreeSet::new();
        for f in &p.functions {
            for b in &f.blocks {
                for i in &b.insts {
                    match i {
                        Inst::GetField { field, .. } | Inst::PutField { field, .. } => {
                            field_universe.insert(field.clone());
                        }
                        Inst::GetStatic { class, field, .. } | Inst::PutStatic { class, field, .. } => {
                            field_universe.insert(field.clone());
                            static_roots.insert((class.clone(), field.clone()));
                        }
                        _ => {}
                    }
                }
            }
        }

        let mut info = ProgramInfo {
            supertypes,
            declared_classes,
            extern_classes,
            fn_index,
            values: BTreeMap::new(),
            preds: BTreeMap::new(),
            field_universe,
            static_roots,
        };

        for f in &p.functions {
            info.preds.insert(f.name.clone(), compute_preds(f));
        }
        // Value typing needs call resolution, which needs the hierarchy; done
        // in a second pass, iterated to a fixpoint for def-order independence.
        for f in &p.functions {
            let v = info.type_values(p, f);
            info.values.insert(f.name.clone(), v);
        }
        info
    }

    pub fn is_declared_class(&self, name: &str) -> bool {
        self.declared_classes.contains(name)
    }

    pub fn is_extern_class(&self, name: &str) -> bool {
        self.extern_classes.contains(name)
    }

    pub fn class_known(&self, name: &str) -> bool {
        self.is_declared_class(name) || self.is_extern_class(name)
    }

    /// `class` plus all transitive supertypes (classes and interfaces).
    pub fn supertype_names(&self, class: &str) -> Vec<String> {
        match self.supertypes.get(class) {
            Some(s) => s.iter().cloned().collect(),
            None => vec![class.to_string()],
        }
    }

    /// `a` is `b` or transitively extends/implements it.
    pub fn is_subtype_of(&self, a: &str, b: &str) -> bool {
        a == b || self.supertypes.get(a).map(|s| s.contains(b)).unwrap_or(false)
    }

    /// Declared classes in the subtree rooted at `class` (self included).
    pub fn subtree(&self, class: &str) -> Vec<String> {
        let mut v: Vec<String> = self
            .declared_classes
            .iter()
            .filter(|c| self.is_subtype_of(c, class))
            .cloned()
            .collect();
        if !v.contains(&class.to_string()) && self.class_known(class) {
            v.push(class.to_string());
        }
        v.sort();
        v
    }

    pub fn value_def(&self, func: &str, value: &str) -> Option<&ValueDef> {
        self.values.get(func)?.get(value)
    }

    pub fn value_type(&self, func: &str, value: &str) -> TypeRef {
        self.value_def(func, value).map(|d| d.ty.clone()).unwrap_or(TypeRef::Unknown)
    }

    pub fn preds_of(&self, func: &str, block: &str) -> &[String] {
        self.preds
            .get(func)
            .and_then(|m| m.get(block))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn field_type(&self, p: &Program, class: &str, field: &str) -> Option<TypeRef> {
        let mut cur = Some(class.to_string());
        while let Some(c) = cur {
            let decl = p.class(&c)?;
            if let Some((_, t)) = decl.fields.iter().find(|(n, _)| n == field) {
                return Some(t.clone());
            }
            cur = decl.superclass.clone();
        }
        None
    }

    /// Class-hierarchy resolution for a virtual callsite on a receiver of
    /// declared type `recv_ty` invoking `method`.
    pub fn resolve_virtual(&self, p: &Program, recv_ty: &TypeRef, method: &str) -> CallTarget {
        if let Some(class) = recv_ty.class_name() {
            if self.is_declared_class(class) {
                let mut bodies = BTreeSet::new();
                // Overrides declared anywhere in the receiver's subtree.
                for sub in self.subtree(class) {
                    let qn = format!("{sub}.{method}");
                    if self.fn_index.contains_key(&qn) {
                        bodies.insert(qn);
                    }
                }
                // Nearest ancestor definition the receiver would inherit.
                let mut cur = Some(class.to_string());
                while let Some(c) = cur {
                    let qn = format!("{c}.{method}");
                    if self.fn_index.contains_key(&qn) {
                        bodies.insert(qn);
                        break;
                    }
                    cur = p.class(&c).and_then(|d| d.superclass.clone());
                }
                if !bodies.is_empty() {
                    return CallTarget::Bodies(bodies.into_iter().collect());
                }
            }
        }
        let qualified = match recv_ty.receiver_name() {
            Some(n) => format!("{n}.{method}"),
            None => format!("<{recv_ty}>.{method}"),
        };
        let declared = p.extern_func(&qualified).is_some();
        CallTarget::Extern { qualified, declared }
    }

    /// Resolution for any call instruction (static or virtual).
    pub fn call_target(&self, p: &Program, func: &str, inst: &Inst) -> Option<CallTarget> {
        match inst {
            Inst::CallStatic { callee, .. } => {
                if self.fn_index.contains_key(callee) {
                    Some(CallTarget::Bodies(vec![callee.clone()]))
                } else {
                    Some(CallTarget::Extern {
                        qualified: callee.clone(),
                        declared: p.extern_func(callee).is_some(),
                    })
                }
            }
            Inst::CallVirtual { recv, method, .. } => {
                let recv_ty = self.value_type(func, recv);
                Some(self.resolve_virtual(p, &recv_ty, method))
            }
            _ => None,
        }
    }

    fn type_values(&self, p: &Program, f: &FunctionDef) -> BTreeMap<String, ValueDef> {
        let mut out: BTreeMap<String, ValueDef> = BTreeMap::new();
        for (n, t) in &f.params {
            out.insert(n.clone(), ValueDef { ty: t.clone(), def: None });
        }
        // Fixpoint over def sites: most types resolve in one pass; loads and
        // calls may need another when their operand is defined later in text.
        let mut changed = true;
        let mut rounds = 0usize;
        while changed && rounds <= f.blocks.iter().map(|b| b.insts.len()).sum::<usize>() + 1 {
            changed = false;
            rounds += 1;
            for b in &f.blocks {
                for (idx, i) in b.insts.iter().enumerate() {
                    let Some(dst) = i.defined_value() else { continue };
                    let ty = match i {
                        Inst::ConstStr { .. } => TypeRef::Str,
                        Inst::ConstInt { .. } => TypeRef::Int,
                        Inst::Load { src, .. } => {
                            out.get(src).map(|d| d.ty.clone()).unwrap_or(TypeRef::Unknown)
                        }
                        Inst::BitCast { ty, .. } | Inst::Phi { ty, .. } | Inst::New { ty, .. } => {
                            ty.clone()
                        }
                        Inst::GetField { obj, field, .. } => {
                            let oty = out.get(obj).map(|d| d.ty.clone()).unwrap_or(TypeRef::Unknown);
                            match oty.class_name() {
                                Some(c) => {
                                    self.field_type(p, c, field).unwrap_or(TypeRef::Unknown)
                                }
                                None => TypeRef::Unknown,
                            }
                        }
                        Inst::GetStatic { class, field, .. } => {
                            self.field_type(p, class, field).unwrap_or(TypeRef::Unknown)
                        }
                        Inst::CallStatic { callee, .. } => {
                            if let Some(idx2) = self.fn_index.get(callee) {
                                p.functions[*idx2].ret.clone().unwrap_or(TypeRef::Unknown)
                            } else if let Some(ExternDecl::Func { ret, .. }) = p.extern_func(callee)
                            {
                                ret.clone().unwrap_or(TypeRef::Unknown)
                            } else {
                                TypeRef::Unknown
                            }
                        }
                        Inst::CallVirtual { recv, method, .. } => {
                            let rty =
                                out.get(recv).map(|d| d.ty.clone()).unwrap_or(TypeRef::Unknown);
                            match self.resolve_virtual(p, &rty, method) {
                                CallTarget::Bodies(bodies) => bodies
                                    .first()
                                    .and_then(|b| self.fn_index.get(b))
                                    .and_then(|i| p.functions[*i].ret.clone())
                                    .unwrap_or(TypeRef::Unknown),
                                CallTarget::Extern { qualified, .. } => {
                                    match p.extern_func(&qualified) {
                                        Some(ExternDecl::Func { ret, .. }) => {
                                            ret.clone().unwrap_or(TypeRef::Unknown)
                                        }
                                        _ => TypeRef::Unknown,
                                    }
                                }
                            }
                        }
                        _ => continue,
                    };
                    let def = Some(Location::new(f.name.clone(), b.label.clone(), idx));
                    let entry = ValueDef { ty, def };
                    match out.get(dst) {
                        Some(prev) if *prev == entry => {}
                        // First definition wins on duplicates; the validator
                        // reports the SSA violation separately.
                        Some(prev) if prev.def != entry.def => {}
                        _ => {
                            out.insert(dst.to_string(), entry);
                            changed = true;
                        }
                    }
                }
            }
        }
        out
    }
}

fn compute_preds(f: &FunctionDef) -> BTreeMap<String, Vec<String>> {
    let mut preds: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for b in &f.blocks {
        preds.entry(b.label.clone()).or_default();
    }
    for b in &f.blocks {
        if let Some(term) = b.insts.last() {
            let succs: Vec<&str> = match term {
                Inst::Br { target } => vec![target],
                Inst::CondBr { then_bb, else_bb, .. } => vec![then_bb, else_bb],
                _ => vec![],
            };
            for s in succs {
                preds.entry(s.to_string()).or_default().push(b.label.clone());
            }
        }
    }
    for v in preds.values_mut() {
        v.sort();
        v.dedup();
    }
    preds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::parse_program;

    #[test]
    fn virtual_resolution_subtree() {
        let src = r#"
class Base { }
class A extends Base { }
class B extends Base { }
func @A.m(%this: A) -> void { bb0: ret }
func @B.m(%this: B) -> void { bb0: ret }
func @main(%x: Base) -> void { bb0: callv %x .m() ret }
"#;
        let p = parse_program(src).unwrap();
        let info = ProgramInfo::build(&p);
        let inst = &p.function("main").unwrap().blocks[0].insts[0];
        match info.call_target(&p, "main", inst).unwrap() {
            CallTarget::Bodies(mut b) => {
                b.sort();
                assert_eq!(b, vec!["A.m".to_string(), "B.m".to_string()]);
            }
            t => panic!("expected bodies, got {t:?}"),
        }
    }

    #[test]
    fn virtual_resolution_inherited() {
        let src = r#"
class Base { }
class A extends Base { }
func @Base.m(%this: Base) -> void { bb0: ret }
func @main(%x: A) -> void { bb0: callv %x .m() ret }
"#;
        let p = parse_program(src).unwrap();
        let info = ProgramInfo::build(&p);
        let inst = &p.function("main").unwrap().blocks[0].insts[0];
        assert_eq!(
            info.call_target(&p, "main", inst).unwrap(),
            CallTarget::Bodies(vec!["Base.m".to_string()])
        );
    }

    #[test]
    fn extern_receiver_resolves_to_extern() {
        let src = r#"
extern class java.security.SecureRandom
extern func @java.security.SecureRandom.nextInt() -> int
func @main(%r: java.security.SecureRandom) -> void { bb0: %n = callv %r .nextInt() ret }
"#;
        let p = parse_program(src).unwrap();
        let info = ProgramInfo::build(&p);
        let inst = &p.function("main").unwrap().blocks[0].insts[0];
        assert_eq!(
            info.call_target(&p, "main", inst).unwrap(),
            CallTarget::Extern {
                qualified: "java.security.SecureRandom.nextInt".to_string(),
                declared: true
            }
        );
        assert_eq!(info.value_type("main", "n"), TypeRef::Int);
    }
}
