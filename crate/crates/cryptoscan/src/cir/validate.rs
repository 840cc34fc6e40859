//! Structural validation: SSA, CFG, handler, and type-resolution invariants.
//! Diagnostics are the return value; an empty list means the program is
//! accepted by every later analysis without structural errors.

use super::ast::*;
use super::info::ProgramInfo;
use crate::cir::info::CallTarget;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: Location,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

pub fn validate_program(p: &Program) -> Vec<Diagnostic> {
    let info = ProgramInfo::build(p);
    let mut diags = Vec::new();
    let diag = |diags: &mut Vec<Diagnostic>, loc: Location, msg: String| {
        diags.push(Diagnostic { location: loc, message: msg });
    };

    // Duplicate definitions.
    let mut seen_fns = BTreeSet::new();
    for f in &p.functions {
        if !seen_fns.insert(&f.name) {
            diag(&mut diags, Location::new(f.name.clone(), "", 0), "duplicate function definition".into());
        }
    }
    let mut seen_classes = BTreeSet::new();
    for c in &p.classes {
        if !seen_classes.insert(&c.name) {
            diag(&mut diags, Location::new("", c.name.clone(), 0), "duplicate class definition".into());
        }
    }

    // Class declarations: acyclic inheritance, resolvable references,
    // staticinit shape.
    for c in &p.classes {
        let mut visited = BTreeSet::new();
        let mut cur = c.superclass.clone();
        while let Some(s) = cur {
            if s == c.name || !visited.insert(s.clone()) {
                diag(&mut diags, Location::new("", c.name.clone(), 0), format!("inheritance cycle through '{s}'"));
                break;
            }
            if !info.class_known(&s) {
                diag(&mut diags, Location::new("", c.name.clone(), 0), format!("unknown superclass '{s}'"));
                break;
            }
            cur = p.class(&s).and_then(|d| d.superclass.clone());
        }
        for i in &c.interfaces {
            if !info.class_known(i) {
                diag(&mut diags, Location::new("", c.name.clone(), 0), format!("unknown interface '{i}'"));
            }
        }
        for (fname, ty) in &c.fields {
            if let TypeRef::Class(n) = ty {
                if !info.class_known(n) {
                    diag(&mut diags, Location::new("", c.name.clone(), 0), format!("field '{fname}' has unknown type '{n}'"));
                }
            }
        }
        if let Some(si) = &c.static_init {
            match p.function(si) {
                None => diag(&mut diags, Location::new("", c.name.clone(), 0), format!("staticinit '@{si}' is not a declared function")),
                Some(f) if !f.params.is_empty() => {
                    diag(&mut diags, Location::new(si.clone(), "", 0), "staticinit must take zero parameters".into())
                }
                _ => {}
            }
        }
    }

    for f in &p.functions {
        validate_function(p, &info, f, &mut diags);
    }
    diags
}

fn validate_function(p: &Program, info: &ProgramInfo, f: &FunctionDef, diags: &mut Vec<Diagnostic>) {
    let loc = |block: &str, index: usize| Location::new(f.name.clone(), block, index);
    if f.blocks.is_empty() {
        diags.push(Diagnostic { location: loc("", 0), message: "function has no blocks".into() });
        return;
    }

    let labels: BTreeMap<&str, usize> =
        f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    if labels.len() != f.blocks.len() {
        diags.push(Diagnostic { location: loc("", 0), message: "duplicate block label".into() });
        return;
    }
    for (pname, ty) in &f.params {
        if let TypeRef::Class(n) = ty {
            if !info.class_known(n) {
                diags.push(Diagnostic { location: loc("", 0), message: format!("parameter '%{pname}' has unknown type '{n}'") });
            }
        }
    }

    // Terminator shape: exactly one, at the end.
    for b in &f.blocks {
        match b.insts.last() {
            None => diags.push(Diagnostic { location: loc(&b.label, 0), message: "empty block (missing terminator)".into() }),
            Some(t) if !t.is_terminator() => diags.push(Diagnostic { location: loc(&b.label, b.insts.len() - 1), message: "block does not end in a terminator".into() }),
            _ => {}
        }
        for (i, inst) in b.insts.iter().enumerate() {
            if inst.is_terminator() && i + 1 != b.insts.len() {
                diags.push(Diagnostic { location: loc(&b.label, i), message: "terminator in the middle of a block".into() });
            }
            if inst.is_phi() && b.insts[..i].iter().any(|x| !x.is_phi()) {
                diags.push(Diagnostic { location: loc(&b.label, i), message: "phi after non-phi instruction".into() });
            }
        }
        // Branch targets resolve.
        if let Some(t) = b.insts.last() {
            let targets: Vec<&str> = match t {
                Inst::Br { target } => vec![target],
                Inst::CondBr { then_bb, else_bb, .. } => vec![then_bb, else_bb],
                _ => vec![],
            };
            for tgt in targets {
                if !labels.contains_key(tgt) {
                    diags.push(Diagnostic { location: loc(&b.label, b.insts.len() - 1), message: format!("branch to unknown block '{tgt}'") });
                }
            }
        }
    }

    // Handlers reference existing blocks.
    for h in &f.handlers {
        for b in [&h.start_block, &h.end_block, &h.handler_block] {
            if !labels.contains_key(b.as_str()) {
                diags.push(Diagnostic { location: loc(b, 0), message: format!("handler references unknown block '{b}'") });
            }
        }
        if let TypeRef::Class(n) = &h.caught_type {
            if !info.class_known(n) {
                diags.push(Diagnostic { location: loc(&h.handler_block, 0), message: format!("handler catches unknown type '{n}'") });
            }
        }
    }

    // Reachability from entry over branch + handler edges.
    let preds_with_handlers = preds_and_handler_edges(f, &labels);
    let mut reach = BTreeSet::new();
    let mut stack = vec![0usize];
    let succs = successors(f, &labels);
    while let Some(i) = stack.pop() {
        if !reach.insert(i) {
            continue;
        }
        for s in succs.get(&i).into_iter().flatten() {
            stack.push(*s);
        }
    }
    for (i, b) in f.blocks.iter().enumerate() {
        if !reach.contains(&i) {
            diags.push(Diagnostic { location: loc(&b.label, 0), message: "block unreachable from entry".into() });
        }
    }

    // Phi arms match the predecessor set exactly.
    for b in &f.blocks {
        let preds: BTreeSet<&str> =
            info.preds_of(&f.name, &b.label).iter().map(|s| s.as_str()).collect();
        for (i, inst) in b.insts.iter().enumerate() {
            if let Inst::Phi { arms, .. } = inst {
                let arm_labels: BTreeSet<&str> = arms.iter().map(|(_, l)| l.as_str()).collect();
                if arm_labels != preds || arm_labels.len() != arms.len() {
                    diags.push(Diagnostic { location: loc(&b.label, i), message: "phi predecessor mismatch".into() });
                }
            }
        }
    }

    // SSA: single definition, uses resolve, defs dominate uses.
    let mut defs: BTreeMap<&str, (usize, usize)> = BTreeMap::new(); // value -> (block, index)
    let params: BTreeSet<&str> = f.params.iter().map(|(n, _)| n.as_str()).collect();
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, inst) in b.insts.iter().enumerate() {
            if let Some(d) = inst.defined_value() {
                if params.contains(d) {
                    diags.push(Diagnostic { location: loc(&b.label, ii), message: format!("value '%{d}' redefines a parameter") });
                } else if defs.insert(d, (bi, ii)).is_some() {
                    diags.push(Diagnostic { location: loc(&b.label, ii), message: format!("value '%{d}' defined more than once") });
                }
            }
        }
    }
    let idom = dominators(f.blocks.len(), &preds_with_handlers);
    let dominates = |a: usize, b: usize| -> bool {
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match idom[cur] {
                Some(d) if d != cur => cur = d,
                _ => return cur == a,
            }
        }
    };
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, inst) in b.insts.iter().enumerate() {
            if let Inst::Phi { arms, .. } = inst {
                for (v, arm_label) in arms {
                    if params.contains(v.as_str()) {
                        continue;
                    }
                    match (defs.get(v.as_str()), labels.get(arm_label.as_str())) {
                        (Some((db, _)), Some(pb)) => {
                            if !dominates(*db, *pb) {
                                diags.push(Diagnostic { location: loc(&b.label, ii), message: format!("phi arm '%{v}' does not dominate predecessor '{arm_label}'") });
                            }
                        }
                        (None, _) => diags.push(Diagnostic { location: loc(&b.label, ii), message: format!("use of undefined value '%{v}'") }),
                        _ => {}
                    }
                }
                continue;
            }
            for v in inst.used_values() {
                if params.contains(v) {
                    continue;
                }
                match defs.get(v) {
                    None => diags.push(Diagnostic { location: loc(&b.label, ii), message: format!("use of undefined value '%{v}'") }),
                    Some((db, di)) => {
                        if *db == bi {
                            if *di >= ii {
                                diags.push(Diagnostic { location: loc(&b.label, ii), message: format!("use of '%{v}' before its definition") });
                            }
                        } else if !dominates(*db, bi) {
                            diags.push(Diagnostic { location: loc(&b.label, ii), message: format!("definition of '%{v}' does not dominate its use") });
                        }
                    }
                }
            }
        }
    }

    // Instruction-level resolution: fields, statics, callees, arity, types.
    for b in &f.blocks {
        for (ii, inst) in b.insts.iter().enumerate() {
            let l = loc(&b.label, ii);
            match inst {
                Inst::BitCast { ty, .. } | Inst::New { ty, .. } | Inst::Phi { ty, .. } => {
                    if let TypeRef::Class(n) = ty {
                        if !info.class_known(n) {
                            diags.push(Diagnostic { location: l, message: format!("unknown type '{n}'") });
                        }
                    }
                }
                Inst::GetField { obj, field, .. } | Inst::PutField { obj, field, .. } => {
                    let oty = info.value_type(&f.name, obj);
                    match oty.class_name() {
                        Some(c) if info.is_declared_class(c) => {
                            if info.field_type(p, c, field).is_none() {
                                diags.push(Diagnostic { location: l, message: format!("class '{c}' has no field '{field}'") });
                            }
                        }
                        _ => diags.push(Diagnostic { location: l, message: format!("field access on non-class value '%{obj}'") }),
                    }
                }
                Inst::GetStatic { class, field, .. } | Inst::PutStatic { class, field, .. } => {
                    if !info.is_declared_class(class) {
                        diags.push(Diagnostic { location: l, message: format!("unknown class '{class}' in static access") });
                    } else if info.field_type(p, class, field).is_none() {
                        diags.push(Diagnostic { location: l, message: format!("class '{class}' has no field '{field}'") });
                    }
                }
                Inst::CallStatic { callee, args, .. } => {
                    match info.call_target(p, &f.name, inst) {
                        Some(CallTarget::Bodies(bodies)) => {
                            let callee_fn = p.function(&bodies[0]).unwrap();
                            if callee_fn.params.len() != args.len() {
                                diags.push(Diagnostic { location: l, message: format!("call to '@{callee}' with {} args, expected {}", args.len(), callee_fn.params.len()) });
                            }
                        }
                        Some(CallTarget::Extern { declared, .. }) => {
                            if !declared {
                                diags.push(Diagnostic { location: l, message: format!("call to unknown function '@{callee}'") });
                            } else if let Some(ExternDecl::Func { params, .. }) = p.extern_func(callee) {
                                if params.len() != args.len() {
                                    diags.push(Diagnostic { location: l, message: format!("call to '@{callee}' with {} args, expected {}", args.len(), params.len()) });
                                }
                            }
                        }
                        None => {}
                    }
                }
                Inst::CallVirtual { method, args, .. } => {
                    match info.call_target(p, &f.name, inst) {
                        Some(CallTarget::Bodies(bodies)) => {
                            for body in &bodies {
                                let callee_fn = p.function(body).unwrap();
                                if callee_fn.params.len() != args.len() + 1 {
                                    diags.push(Diagnostic { location: l.clone(), message: format!("virtual call to '{body}' with {} args, expected {}", args.len(), callee_fn.params.len().saturating_sub(1)) });
                                }
                            }
                        }
                        Some(CallTarget::Extern { qualified, declared }) => {
                            if !declared {
                                diags.push(Diagnostic { location: l, message: format!("virtual call to undeclared method '{qualified}'") });
                            } else if let Some(ExternDecl::Func { params, .. }) = p.extern_func(&qualified) {
                                if params.len() != args.len() {
                                    diags.push(Diagnostic { location: l, message: format!("virtual call to '{qualified}' with {} args, expected {}", args.len(), params.len()) });
                                }
                            }
                        }
                        None => {
                            diags.push(Diagnostic { location: l, message: format!("cannot resolve virtual method '{method}'") });
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

fn successors(f: &FunctionDef, labels: &BTreeMap<&str, usize>) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, b) in f.blocks.iter().enumerate() {
        let mut v = Vec::new();
        if let Some(t) = b.insts.last() {
            match t {
                Inst::Br { target } => {
                    if let Some(x) = labels.get(target.as_str()) {
                        v.push(*x);
                    }
                }
                Inst::CondBr { then_bb, else_bb, .. } => {
                    for tgt in [then_bb, else_bb] {
                        if let Some(x) = labels.get(tgt.as_str()) {
                            v.push(*x);
                        }
                    }
                }
                _ => {}
            }
        }
        out.insert(i, v);
    }
    // Handler edges: control may transfer from any block in the protected
    // range to the handler block.
    for h in &f.handlers {
        if let (Some(&s), Some(&e), Some(&hb)) = (
            labels.get(h.start_block.as_str()),
            labels.get(h.end_block.as_str()),
            labels.get(h.handler_block.as_str()),
        ) {
            for i in s..=e.min(f.blocks.len() - 1) {
                out.entry(i).or_default().push(hb);
            }
        }
    }
    out
}

fn preds_and_handler_edges(
    f: &FunctionDef,
    labels: &BTreeMap<&str, usize>,
) -> Vec<Vec<usize>> {
    let succs = successors(f, labels);
    let mut preds = vec![Vec::new(); f.blocks.len()];
    for (from, tos) in &succs {
        for to in tos {
            preds[*to].push(*from);
        }
    }
    preds
}

/// Iterative dominator computation (Cooper/Harvey/Kennedy style, simplified).
fn dominators(n: usize, preds: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut idom: Vec<Option<usize>> = vec![None; n];
    if n == 0 {
        return idom;
    }
    idom[0] = Some(0);
    let mut changed = true;
    while changed {
        changed = false;
        for b in 1..n {
            let mut new_idom: Option<usize> = None;
            for &pr in &preds[b] {
                if idom[pr].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => pr,
                    Some(cur) => intersect(&idom, pr, cur),
                });
            }
            if let Some(ni) = new_idom {
                if idom[b] != Some(ni) {
                    idom[b] = Some(ni);
                    changed = true;
                }
            }
        }
    }
    idom
}

fn intersect(idom: &[Option<usize>], mut a: usize, mut b: usize) -> usize {
    // Block index order is reverse-postorder-ish for structured inputs; walk
    // both up until they meet, falling back to the entry.
    let mut steps = 0;
    while a != b {
        steps += 1;
        if steps > idom.len() * 4 {
            return 0;
        }
        while a > b {
            a = idom[a].unwrap_or(0);
            if a == 0 {
                break;
            }
        }
        while b > a {
            b = idom[b].unwrap_or(0);
            if b == 0 {
                break;
            }
        }
        if a == 0 || b == 0 {
            return 0;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::parse_program;

    #[test]
    fn minimal_valid() {
        let p = parse_program("func @main() -> void { bb0: ret }").unwrap();
        assert_eq!(validate_program(&p), vec![]);
    }

    #[test]
    fn phi_predecessor_mismatch() {
        let src = r#"
func @f(%a: int) -> void {
  bb0: br bb1
  bb1: %x = phi int [%a, bb9] ret
}
"#;
        let p = parse_program(src).unwrap();
        let diags = validate_program(&p);
        assert!(
            diags.iter().any(|d| d.message == "phi predecessor mismatch"),
            "{diags:?}"
        );
    }

    #[test]
    fn two_terminators() {
        let src = "func @f() -> void { bb0: ret ret }";
        let p = parse_program(src).unwrap();
        let diags = validate_program(&p);
        assert_eq!(
            diags.iter().filter(|d| d.message.contains("terminator in the middle")).count(),
            1,
            "{diags:?}"
        );
    }

    #[test]
    fn use_before_def_in_block() {
        let src = r#"
func @f() -> void {
  bb0:
    %a = load %v
    %v = const.int 1
    ret
}
"#;
        let p = parse_program(src).unwrap();
        let diags = validate_program(&p);
        assert!(
            diags.iter().any(|d| d.message.contains("before its definition")),
            "{diags:?}"
        );
    }

    #[test]
    fn def_must_dominate_use() {
        let src = r#"
func @f(%c: bool) -> void {
  bb0: condbr %c, bb1, bb2
  bb1: %x = const.int 1
       br bb3
  bb2: br bb3
  bb3: %y = bitcast %x : long
       ret
}
"#;
        let p = parse_program(src).unwrap();
        let diags = validate_program(&p);
        assert!(
            diags.iter().any(|d| d.message.contains("does not dominate")),
            "{diags:?}"
        );
    }

    #[test]
    fn unreachable_block_flagged() {
        let src = r#"
func @f() -> void {
  bb0: ret
  bb1: ret
}
"#;
        let p = parse_program(src).unwrap();
        let diags = validate_program(&p);
        assert!(diags.iter().any(|d| d.message.contains("unreachable")), "{diags:?}");
    }

    #[test]
    fn inheritance_cycle() {
        let src = r#"
class A extends B { }
class B extends A { }
func @main() -> void { bb0: ret }
"#;
        let p = parse_program(src).unwrap();
        let diags = validate_program(&p);
        assert!(diags.iter().any(|d| d.message.contains("inheritance cycle")), "{diags:?}");
    }
}
