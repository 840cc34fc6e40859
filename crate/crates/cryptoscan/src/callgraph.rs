//! Class-hierarchy call graph over declared functions, plus the SCC
//! condensation used to order bottom-up summarization (callees before
//! callers).

use crate::cir::{CallTarget, Location, Program, ProgramInfo};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub location: Location,
    pub target: CallTarget,
}

#[derive(Debug, Default)]
pub struct CallGraph {
    /// caller -> callees (declared bodies only).
    pub edges: BTreeMap<String, BTreeSet<String>>,
    /// callee -> callers.
    pub callers: BTreeMap<String, BTreeSet<String>>,
    /// every call instruction in the program with its resolution.
    pub sites: Vec<CallSite>,
    /// callee -> locations of the callsites that may invoke it.
    pub sites_of: BTreeMap<String, Vec<Location>>,
}

impl CallGraph {
    pub fn build(p: &Program, info: &ProgramInfo) -> Self {
        let mut g = CallGraph::default();
        for f in &p.functions {
            g.edges.entry(f.name.clone()).or_default();
            g.callers.entry(f.name.clone()).or_default();
        }
        for f in &p.functions {
            for b in &f.blocks {
                for (i, inst) in b.insts.iter().enumerate() {
                    if !inst.is_call() {
                        continue;
                    }
                    let Some(target) = info.call_target(p, &f.name, inst) else { continue };
                    let loc = Location::new(f.name.clone(), b.label.clone(), i);
                    if let CallTarget::Bodies(bodies) = &target {
                        for callee in bodies {
                            g.edges.entry(f.name.clone()).or_default().insert(callee.clone());
                            g.callers.entry(callee.clone()).or_default().insert(f.name.clone());
                            g.sites_of.entry(callee.clone()).or_default().push(loc.clone());
                        }
                    }
                    g.sites.push(CallSite { location: loc, target });
                }
            }
        }
        g
    }

    pub fn callers_of(&self, func: &str) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.callers.get(func).unwrap_or(&EMPTY)
    }

    pub fn callees_of(&self, func: &str) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.edges.get(func).unwrap_or(&EMPTY)
    }

    /// Functions no declared callsite can reach: entry points from the
    /// application's perspective. Static initializers count as roots (the
    /// runtime invokes them), even when referenced by a class declaration.
    pub fn roots(&self, p: &Program) -> Vec<String> {
        let clinits: BTreeSet<&String> =
            p.classes.iter().filter_map(|c| c.static_init.as_ref()).collect();
        self.edges
            .keys()
            .filter(|f| self.callers_of(f).is_empty() || clinits.contains(f))
            .cloned()
            .collect()
    }

    /// Strongly connected components in bottom-up (reverse topological)
    /// order: every callee's component appears before its callers'.
    pub fn scc_order(&self) -> SccOrder {
        let nodes: Vec<&String> = self.edges.keys().collect();
        let index_of: BTreeMap<&str, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

        // Tarjan's algorithm, iterative to tolerate deep call chains.
        let n = nodes.len();
        let mut idx = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        let mut next_index = 0usize;
        let mut comps: Vec<Vec<String>> = Vec::new();
        let mut comp_of = vec![usize::MAX; n];

        for start in 0..n {
            if idx[start] != usize::MAX {
                continue;
            }
            // frame: (node, iterator position over its callees)
            let succs: Vec<Vec<usize>> = Vec::new();
            let _ = succs;
            let mut call_stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
            let succ_of = |v: usize| -> Vec<usize> {
                self.callees_of(nodes[v])
                    .iter()
                    .filter_map(|c| index_of.get(c.as_str()).copied())
                    .collect()
            };
            idx[start] = next_index;
            low[start] = next_index;
            next_index += 1;
            stack.push(start);
            on_stack[start] = true;
            call_stack.push((start, succ_of(start), 0));
            while let Some((v, succs, pos)) = call_stack.last_mut() {
                if *pos < succs.len() {
                    let w = succs[*pos];
                    *pos += 1;
                    if idx[w] == usize::MAX {
                        idx[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call_stack.push((w, succ_of(w), 0));
                    } else if on_stack[w] {
                        let v = *v;
                        low[v] = low[v].min(idx[w]);
                    }
                } else {
                    let v = *v;
                    call_stack.pop();
                    if let Some((parent, _, _)) = call_stack.last() {
                        let parent = *parent;
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == idx[v] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().unwrap();
                            on_stack[w] = false;
                            comp_of[w] = comps.len();
                            comp.push(nodes[w].clone());
                            if w == v {
                                break;
                            }
                        }
                        comp.sort();
                        comps.push(comp);
                    }
                }
            }
        }

        // Tarjan emits components in reverse topological order of the
        // condensation when edges point caller -> callee, i.e. callees first.
        let scc_of: BTreeMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, name)| ((*name).clone(), comp_of[i]))
            .collect();
        SccOrder { components: comps, scc_of }
    }

    /// Graphviz rendering for `--dump-callgraph`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph callgraph {\n");
        for f in self.edges.keys() {
            out.push_str(&format!("  \"{f}\";\n"));
        }
        for (caller, callees) in &self.edges {
            for callee in callees {
                out.push_str(&format!("  \"{caller}\" -> \"{callee}\";\n"));
            }
        }
        for s in &self.sites {
            if let CallTarget::Extern { qualified, .. } = &s.target {
                out.push_str(&format!(
                    "  \"{}\" -> \"{qualified}\" [style=dashed];\n",
                    s.location.func
                ));
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug)]
pub struct SccOrder {
    /// Bottom-up: components[0] has no callees outside itself.
    pub components: Vec<Vec<String>>,
    pub scc_of: BTreeMap<String, usize>,
}
