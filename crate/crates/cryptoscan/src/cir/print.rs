//! Canonical text form of a [`Program`]. `parse(print(p)) == p`.

use super::ast::*;
use std::fmt::Write;

fn str_lit(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn ret_ty(t: &Option<TypeRef>) -> String {
    match t {
        Some(t) => t.to_string(),
        None => "void".to_string(),
    }
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for e in &p.externs {
        match e {
            ExternDecl::Class(n) => writeln!(out, "extern class {n}").unwrap(),
            ExternDecl::Func { name, params, ret, is_static } => {
                let ps: Vec<String> = params.iter().map(|t| t.to_string()).collect();
                let s = if *is_static { " static" } else { "" };
                writeln!(out, "extern func @{name}({}) -> {}{s}", ps.join(", "), ret_ty(ret))
                    .unwrap();
            }
        }
    }
    for c in &p.classes {
        write!(out, "class {}", c.name).unwrap();
        if let Some(s) = &c.superclass {
            write!(out, " extends {s}").unwrap();
        }
        if !c.interfaces.is_empty() {
            write!(out, " implements {}", c.interfaces.join(", ")).unwrap();
        }
        writeln!(out, " {{").unwrap();
        for (f, t) in &c.fields {
            writeln!(out, "  field {f}: {t}").unwrap();
        }
        if let Some(si) = &c.static_init {
            writeln!(out, "  staticinit @{si}").unwrap();
        }
        writeln!(out, "}}").unwrap();
    }
    for f in &p.functions {
        let ps: Vec<String> = f.params.iter().map(|(n, t)| format!("%{n}: {t}")).collect();
        writeln!(out, "func @{}({}) -> {} {{", f.name, ps.join(", "), ret_ty(&f.ret)).unwrap();
        for b in &f.blocks {
            writeln!(out, "{}:", b.label).unwrap();
            for i in &b.insts {
                writeln!(out, "  {}", print_inst(i)).unwrap();
            }
        }
        for h in &f.handlers {
            writeln!(
                out,
                "handler ({}) from {} .. {} to {}",
                h.caught_type, h.start_block, h.end_block, h.handler_block
            )
            .unwrap();
        }
        writeln!(out, "}}").unwrap();
    }
    out
}

pub fn print_inst(i: &Inst) -> String {
    match i {
        Inst::ConstStr { dst, value } => format!("%{dst} = const.str {}", str_lit(value)),
        Inst::ConstInt { dst, value } => format!("%{dst} = const.int {value}"),
        Inst::Load { dst, src } => format!("%{dst} = load %{src}"),
        Inst::Store { value, ptr } => format!("store %{value} -> %{ptr}"),
        Inst::BitCast { dst, src, ty } => format!("%{dst} = bitcast %{src} : {ty}"),
        Inst::Phi { dst, ty, arms } => {
            let a: Vec<String> = arms.iter().map(|(v, l)| format!("[%{v}, {l}]")).collect();
            format!("%{dst} = phi {ty} {}", a.join(", "))
        }
        Inst::GetField { dst, obj, field } => format!("%{dst} = getfield %{obj} .{field}"),
        Inst::PutField { obj, field, value } => format!("putfield %{obj} .{field} <- %{value}"),
        Inst::GetStatic { dst, class, field } => format!("%{dst} = getstatic {class}.{field}"),
        Inst::PutStatic { class, field, value } => {
            format!("putstatic {class}.{field} <- %{value}")
        }
        Inst::New { dst, ty } => format!("%{dst} = new {ty}"),
        Inst::CallStatic { dst, callee, args } => {
            let a: Vec<String> = args.iter().map(|x| format!("%{x}")).collect();
            match dst {
                Some(d) => format!("%{d} = call @{callee}({})", a.join(", ")),
                None => format!("call @{callee}({})", a.join(", ")),
            }
        }
        Inst::CallVirtual { dst, recv, method, args } => {
            let a: Vec<String> = args.iter().map(|x| format!("%{x}")).collect();
            match dst {
                Some(d) => format!("%{d} = callv %{recv} .{method}({})", a.join(", ")),
                None => format!("callv %{recv} .{method}({})", a.join(", ")),
            }
        }
        Inst::Ret { value } => match value {
            Some(v) => format!("ret %{v}"),
            None => "ret".to_string(),
        },
        Inst::Br { target } => format!("br {target}"),
        Inst::CondBr { cond, then_bb, else_bb } => {
            format!("condbr %{cond}, {then_bb}, {else_bb}")
        }
        Inst::Throw { value } => format!("throw %{value}"),
    }
}
