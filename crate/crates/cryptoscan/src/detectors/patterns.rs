//! Group-2 intra-procedural TLS patterns: hostname verifiers that always
//! accept, trust managers that skip certificate verification, and
//! SSLSocketFactory creation without hostname verification.

use super::rules::RuleSet;
use crate::cir::{FunctionDef, Inst, Location, Program, ProgramInfo, TypeRef};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PatternKind {
    VerifierAlwaysTrue,
    TrustMissingVerification,
    TrustCaughtNotThrown,
    TrustMissingOnPath,
    FactoryWithoutVerify,
}

impl PatternKind {
    pub fn rule_id(self) -> &'static str {
        match self {
            PatternKind::VerifierAlwaysTrue => "P1",
            PatternKind::TrustMissingVerification => "P2",
            PatternKind::TrustCaughtNotThrown => "P3",
            PatternKind::TrustMissingOnPath => "P4",
            PatternKind::FactoryWithoutVerify => "P5",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternReport {
    pub function: String,
    pub pattern: PatternKind,
    pub witnesses: Vec<Location>,
}

/// Does the declaring class of `f` (transitively) implement an interface
/// whose name ends with `suffix`?
fn implements_like(f: &FunctionDef, info: &ProgramInfo, suffix: &str) -> bool {
    let Some(class) = f.class_name() else { return false };
    info.supertype_names(class).iter().any(|s| s.ends_with(suffix))
}

/// Is `ty` (or any supertype) a certificate-exception type? Only such throws
/// count as verification evidence; other exceptions (e.g. an unconditional
/// UnsupportedOperationException) do not.
fn is_certificate_exception(ty: &TypeRef, info: &ProgramInfo) -> bool {
    match ty.class_name() {
        Some(c) => info.supertype_names(c).iter().any(|s| s.ends_with("CertificateException")),
        None => false,
    }
}

fn block_index(f: &FunctionDef) -> BTreeMap<&str, usize> {
    f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect()
}

fn successors(f: &FunctionDef, i: usize, idx: &BTreeMap<&str, usize>) -> Vec<usize> {
    match f.blocks[i].insts.last() {
        Some(Inst::Br { target }) => idx.get(target.as_str()).copied().into_iter().collect(),
        Some(Inst::CondBr { then_bb, else_bb, .. }) => [then_bb, else_bb]
            .iter()
            .filter_map(|t| idx.get(t.as_str()).copied())
            .collect(),
        _ => vec![],
    }
}

fn reachable_blocks(f: &FunctionDef, start: usize) -> BTreeSet<usize> {
    let idx = block_index(f);
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(b) = stack.pop() {
        if !seen.insert(b) {
            continue;
        }
        stack.extend(successors(f, b, &idx));
        // Handler edges: control may leave any protected block for its handler.
        for h in &f.handlers {
            if let (Some(&s), Some(&e), Some(&hb)) = (
                idx.get(h.start_block.as_str()),
                idx.get(h.end_block.as_str()),
                idx.get(h.handler_block.as_str()),
            ) {
                if b >= s && b <= e {
                    stack.push(hb);
                }
            }
        }
    }
    seen
}

/// Resolves whether `value` is the constant true (int 1) along every
/// definition chain (consts, loads, bitcasts, phi arms).
fn always_true(f: &FunctionDef, value: &str, seen: &mut BTreeSet<String>) -> bool {
    if !seen.insert(value.to_string()) {
        // Cycle through a phi: that arm contributes no other value.
        return true;
    }
    for b in &f.blocks {
        for inst in &b.insts {
            if inst.defined_value() == Some(value) {
                return match inst {
                    Inst::ConstInt { value: v, .. } => *v == 1,
                    Inst::Load { src, .. } => always_true(f, src, seen),
                    Inst::BitCast { src, .. } => always_true(f, src, seen),
                    Inst::Phi { arms, .. } => {
                        arms.iter().all(|(v, _)| always_true(f, v, seen))
                    }
                    _ => false,
                };
            }
        }
    }
    false
}

/// Pattern: a `HostnameVerifier.verify` override whose every reachable
/// return is constant true.
pub fn check_hostname_verifier(f: &FunctionDef, info: &ProgramInfo) -> Option<PatternReport> {
    if f.method_name() != "verify" || !implements_like(f, info, "HostnameVerifier") {
        return None;
    }
    let reach = reachable_blocks(f, 0);
    let mut witnesses = Vec::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        if !reach.contains(&bi) {
            continue;
        }
        for (i, inst) in b.insts.iter().enumerate() {
            if let Inst::Ret { value: Some(v) } = inst {
                if !always_true(f, v, &mut BTreeSet::new()) {
                    return None;
                }
                witnesses.push(Location::new(f.name.clone(), b.label.clone(), i));
            }
        }
    }
    if witnesses.is_empty() {
        return None;
    }
    Some(PatternReport { function: f.name.clone(), pattern: PatternKind::VerifierAlwaysTrue, witnesses })
}

fn is_verification_call(inst: &Inst, rules: &RuleSet) -> bool {
    match inst {
        Inst::CallVirtual { method, .. } => rules.verification_apis.contains(method),
        Inst::CallStatic { callee, .. } => {
            let m = callee.rsplit('.').next().unwrap_or(callee);
            rules.verification_apis.contains(m)
        }
        _ => false,
    }
}

fn cert_throw(f: &FunctionDef, inst: &Inst, info: &ProgramInfo) -> bool {
    match inst {
        Inst::Throw { value } => is_certificate_exception(&info.value_type(&f.name, value), info),
        _ => false,
    }
}

/// Patterns on TrustManager check methods: missing verification, caught-but-
/// not-rethrown verification exceptions, and verification skipped on a path.
pub fn check_trust_manager(
    f: &FunctionDef,
    rules: &RuleSet,
    info: &ProgramInfo,
) -> Vec<PatternReport> {
    if !matches!(f.method_name(), "checkClientTrusted" | "checkServerTrusted")
        || !implements_like(f, info, "TrustManager")
    {
        return vec![];
    }
    let idx = block_index(f);
    let mut reports = Vec::new();

    let mut verify_locs = Vec::new();
    let mut has_cert_throw = false;
    for b in &f.blocks {
        for (i, inst) in b.insts.iter().enumerate() {
            if is_verification_call(inst, rules) {
                verify_locs.push(Location::new(f.name.clone(), b.label.clone(), i));
            }
            has_cert_throw |= cert_throw(f, inst, info);
        }
    }

    if verify_locs.is_empty() && !has_cert_throw {
        let entry = Location::new(f.name.clone(), f.blocks[0].label.clone(), 0);
        reports.push(PatternReport {
            function: f.name.clone(),
            pattern: PatternKind::TrustMissingVerification,
            witnesses: vec![entry],
        });
        return reports;
    }

    // Caught but not rethrown: a verification call inside a protected range
    // whose certificate-exception handler region never throws one.
    for h in &f.handlers {
        if !is_certificate_exception(&h.caught_type, info) {
            continue;
        }
        let (Some(&s), Some(&e), Some(&hb)) = (
            idx.get(h.start_block.as_str()),
            idx.get(h.end_block.as_str()),
            idx.get(h.handler_block.as_str()),
        ) else {
            continue;
        };
        let protected_has_verify = f.blocks[s..=e.min(f.blocks.len() - 1)]
            .iter()
            .any(|b| b.insts.iter().any(|i| is_verification_call(i, rules)));
        if !protected_has_verify {
            continue;
        }
        let handler_region = reachable_blocks(f, hb);
        let handler_throws = handler_region
            .iter()
            .any(|&bi| f.blocks[bi].insts.iter().any(|i| cert_throw(f, i, info)));
        if !handler_throws {
            reports.push(PatternReport {
                function: f.name.clone(),
                pattern: PatternKind::TrustCaughtNotThrown,
                witnesses: vec![Location::new(f.name.clone(), h.handler_block.clone(), 0)],
            });
        }
    }

    // Verification missing on some entry→exit path: DFS avoiding blocks that
    // verify or throw; back-edges collapse (acyclic traversal).
    let blocked: BTreeSet<usize> = f
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            b.insts.iter().any(|i| is_verification_call(i, rules) || cert_throw(f, i, info))
        })
        .map(|(i, _)| i)
        .collect();
    let mut seen = BTreeSet::new();
    let mut stack = vec![0usize];
    let mut unverified_exit = None;
    while let Some(b) = stack.pop() {
        if blocked.contains(&b) || !seen.insert(b) {
            continue;
        }
        if matches!(f.blocks[b].insts.last(), Some(Inst::Ret { .. })) {
            unverified_exit =
                Some(Location::new(f.name.clone(), f.blocks[b].label.clone(), f.blocks[b].insts.len() - 1));
            break;
        }
        stack.extend(successors(f, b, &idx));
    }
    if let Some(w) = unverified_exit {
        reports.push(PatternReport {
            function: f.name.clone(),
            pattern: PatternKind::TrustMissingOnPath,
            witnesses: vec![w],
        });
    }
    reports
}

fn is_hostname_verifier_type(ty: &TypeRef, info: &ProgramInfo) -> bool {
    match ty.class_name() {
        Some(c) => info.supertype_names(c).iter().any(|s| s.ends_with("HostnameVerifier")),
        None => false,
    }
}

/// Pattern: an SSLSocketFactory obtained with no hostname verification on
/// some path from creation to function exit.
pub fn check_ssl_socket_factory(
    f: &FunctionDef,
    p: &Program,
    info: &ProgramInfo,
) -> Option<PatternReport> {
    let _ = p;
    let idx = block_index(f);
    let is_verify = |inst: &Inst| match inst {
        Inst::CallVirtual { method, recv, .. } => {
            method == "verify" && is_hostname_verifier_type(&info.value_type(&f.name, recv), info)
        }
        _ => false,
    };
    for (bi, b) in f.blocks.iter().enumerate() {
        for (i, inst) in b.insts.iter().enumerate() {
            let created = match inst.defined_value() {
                Some(d) if inst.is_call() => info
                    .value_type(&f.name, d)
                    .class_name()
                    .map(|c| c.ends_with("SSLSocketFactory"))
                    .unwrap_or(false),
                _ => false,
            };
            if !created {
                continue;
            }
            // Remainder of the creating block verifies → this block is safe.
            if b.insts[i + 1..].iter().any(is_verify) {
                continue;
            }
            if matches!(b.insts.last(), Some(Inst::Ret { .. })) {
                return Some(PatternReport {
                    function: f.name.clone(),
                    pattern: PatternKind::FactoryWithoutVerify,
                    witnesses: vec![Location::new(f.name.clone(), b.label.clone(), i)],
                });
            }
            let verifying: BTreeSet<usize> = f
                .blocks
                .iter()
                .enumerate()
                .filter(|(_, blk)| blk.insts.iter().any(is_verify))
                .map(|(x, _)| x)
                .collect();
            let mut seen = BTreeSet::new();
            let mut stack = successors(f, bi, &idx);
            while let Some(nb) = stack.pop() {
                if verifying.contains(&nb) || !seen.insert(nb) {
                    continue;
                }
                if matches!(f.blocks[nb].insts.last(), Some(Inst::Ret { .. })) {
                    return Some(PatternReport {
                        function: f.name.clone(),
                        pattern: PatternKind::FactoryWithoutVerify,
                        witnesses: vec![Location::new(f.name.clone(), b.label.clone(), i)],
                    });
                }
                stack.extend(successors(f, nb, &idx));
            }
        }
    }
    None
}

/// Runs every Group-2 check over the whole program.
pub fn run_patterns(p: &Program, info: &ProgramInfo, rules: &RuleSet) -> Vec<PatternReport> {
    let mut out = Vec::new();
    for f in &p.functions {
        out.extend(check_hostname_verifier(f, info));
        out.extend(check_trust_manager(f, rules, info));
        out.extend(check_ssl_socket_factory(f, p, info));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::parse_program;

    fn analyze(src: &str) -> Vec<PatternReport> {
        let p = parse_program(src).unwrap();
        let info = ProgramInfo::build(&p);
        assert_eq!(crate::cir::validate_program(&p), vec![], "fixture must validate");
        run_patterns(&p, &info, &RuleSet::default())
    }

    const VERIFIER_PRELUDE: &str = r#"
extern class javax.net.ssl.HostnameVerifier
extern class javax.net.ssl.SSLSession
class AcceptAll implements javax.net.ssl.HostnameVerifier { }
"#;

    #[test]
    fn verifier_always_true_fires() {
        let src = format!(
            "{VERIFIER_PRELUDE}
func @AcceptAll.verify(%this: AcceptAll, %host: String, %sess: javax.net.ssl.SSLSession) -> bool {{
  bb0:
    %t = const.int 1
    ret %t
}}"
        );
        let reports = analyze(&src);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pattern, PatternKind::VerifierAlwaysTrue);
    }

    #[test]
    fn verifier_with_computation_silent() {
        let src = format!(
            "{VERIFIER_PRELUDE}
extern func @String.equals(String) -> bool
func @AcceptAll.verify(%this: AcceptAll, %host: String, %sess: javax.net.ssl.SSLSession) -> bool {{
  bb0:
    %e = const.str \"example.com\"
    %ok = callv %host .equals(%e)
    ret %ok
}}"
        );
        assert!(analyze(&src).is_empty());
    }

    #[test]
    fn verifier_phi_of_trues_fires() {
        let src = format!(
            "{VERIFIER_PRELUDE}
func @AcceptAll.verify(%this: AcceptAll, %host: String, %sess: javax.net.ssl.SSLSession, %c: bool) -> bool {{
  bb0:
    condbr %c, bb1, bb2
  bb1:
    %a = const.int 1
    br bb3
  bb2:
    %b = const.int 1
    br bb3
  bb3:
    %r = phi bool [%a, bb1], [%b, bb2]
    ret %r
}}"
        );
        let reports = analyze(&src);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pattern, PatternKind::VerifierAlwaysTrue);
    }

    const TM_PRELUDE: &str = r#"
extern class javax.net.ssl.X509TrustManager
extern class java.security.cert.X509Certificate
extern class java.security.cert.CertificateException
class NaiveTM implements javax.net.ssl.X509TrustManager { }
"#;

    #[test]
    fn empty_trust_manager_missing_verification() {
        let src = format!(
            "{TM_PRELUDE}
func @NaiveTM.checkServerTrusted(%this: NaiveTM, %chain: java.security.cert.X509Certificate) -> void {{
  bb0:
    ret
}}"
        );
        let reports = analyze(&src);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pattern, PatternKind::TrustMissingVerification);
    }

    #[test]
    fn always_throw_unsupported_operation_still_missing_verification() {
        let src = format!(
            "{TM_PRELUDE}
extern class java.lang.UnsupportedOperationException
func @NaiveTM.checkServerTrusted(%this: NaiveTM, %chain: java.security.cert.X509Certificate) -> void {{
  bb0:
    %e = new java.lang.UnsupportedOperationException
    throw %e
}}"
        );
        let reports = analyze(&src);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pattern, PatternKind::TrustMissingVerification);
    }

    #[test]
    fn caught_not_thrown() {
        let src = format!(
            "{TM_PRELUDE}
extern func @java.security.cert.X509Certificate.checkValidity() -> void
func @NaiveTM.checkServerTrusted(%this: NaiveTM, %cert: java.security.cert.X509Certificate) -> void {{
  bb0:
    callv %cert .checkValidity()
    br bb1
  bb1:
    ret
  bbCatch:
    ret
handler (java.security.cert.CertificateException) from bb0 .. bb0 to bbCatch
}}"
        );
        let reports = analyze(&src);
        assert!(reports.iter().any(|r| r.pattern == PatternKind::TrustCaughtNotThrown), "{reports:?}");
    }

    #[test]
    fn missing_on_path() {
        let src = format!(
            "{TM_PRELUDE}
extern func @java.security.cert.X509Certificate.checkValidity() -> void
func @NaiveTM.checkServerTrusted(%this: NaiveTM, %cert: java.security.cert.X509Certificate, %c: bool) -> void {{
  bb0:
    condbr %c, bbVerify, bbSkip
  bbVerify:
    callv %cert .checkValidity()
    br bbEnd
  bbSkip:
    br bbEnd
  bbEnd:
    ret
}}"
        );
        let reports = analyze(&src);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pattern, PatternKind::TrustMissingOnPath);
    }

    const SSL_PRELUDE: &str = r#"
extern class javax.net.ssl.SSLSocketFactory
extern class javax.net.ssl.HostnameVerifier
extern class javax.net.ssl.SSLSession
extern func @javax.net.ssl.SSLSocketFactory.getDefault() -> javax.net.ssl.SSLSocketFactory static
extern func @javax.net.ssl.HostnameVerifier.verify(String, javax.net.ssl.SSLSession) -> bool
"#;

    #[test]
    fn factory_without_verify() {
        let src = format!(
            "{SSL_PRELUDE}
func @connect() -> void {{
  bb0:
    %sf = call @javax.net.ssl.SSLSocketFactory.getDefault()
    ret
}}"
        );
        let reports = analyze(&src);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pattern, PatternKind::FactoryWithoutVerify);
    }

    #[test]
    fn factory_with_verify_silent() {
        let src = format!(
            "{SSL_PRELUDE}
func @connect(%hv: javax.net.ssl.HostnameVerifier, %host: String, %sess: javax.net.ssl.SSLSession) -> void {{
  bb0:
    %sf = call @javax.net.ssl.SSLSocketFactory.getDefault()
    %ok = callv %hv .verify(%host, %sess)
    ret
}}"
        );
        assert!(analyze(&src).is_empty());
    }

    #[test]
    fn diamond_with_one_verifying_branch_fires() {
        let src = format!(
            "{SSL_PRELUDE}
func @connect(%hv: javax.net.ssl.HostnameVerifier, %host: String, %sess: javax.net.ssl.SSLSession, %c: bool) -> void {{
  bb0:
    %sf = call @javax.net.ssl.SSLSocketFactory.getDefault()
    condbr %c, bbV, bbSkip
  bbV:
    %ok = callv %hv .verify(%host, %sess)
    br bbEnd
  bbSkip:
    br bbEnd
  bbEnd:
    ret
}}"
        );
        let reports = analyze(&src);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pattern, PatternKind::FactoryWithoutVerify);
    }
}
