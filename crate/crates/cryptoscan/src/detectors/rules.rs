//! Rule catalog: sink signatures, weak-algorithm sets, sanitizer/verifier
//! classes, and the line-oriented rules-file format.

use crate::cir::TypeRef;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckKind {
    Constant,
    CipherSpec,
    HashSpec,
    MinInt,
    SeedSource,
    KeyMaterial,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Constant => "constant",
            CheckKind::CipherSpec => "cipher-spec",
            CheckKind::HashSpec => "hash-spec",
            CheckKind::MinInt => "min-int",
            CheckKind::SeedSource => "seed-source",
            CheckKind::KeyMaterial => "key-material",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "constant" => CheckKind::Constant,
            "cipher-spec" => CheckKind::CipherSpec,
            "hash-spec" => CheckKind::HashSpec,
            "min-int" => CheckKind::MinInt,
            "seed-source" => CheckKind::SeedSource,
            "key-material" => CheckKind::KeyMaterial,
            _ => return None,
        })
    }

    /// Default severity when the sink line carries no `sev=` token.
    pub fn default_severity(self) -> &'static str {
        match self {
            CheckKind::Constant | CheckKind::KeyMaterial => "high",
            _ => "medium",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkRule {
    pub rule_id: String,
    pub cwe: u32,
    /// Fully qualified extern API name, e.g. `javax.crypto.Cipher.getInstance`.
    pub api: String,
    /// 0-based argument index; receiver = -1.
    pub arg_index: i32,
    pub check: CheckKind,
    pub expected_type: TypeRef,
    pub severity: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub sinks: Vec<SinkRule>,
    pub sanitizer_classes: BTreeSet<String>,
    pub verifier_classes: BTreeSet<String>,
    pub weak_ciphers: BTreeSet<String>,
    pub weak_hashes: BTreeSet<String>,
    pub block_ciphers: BTreeSet<String>,
    pub secure_seed_sources: BTreeSet<String>,
    pub verification_apis: BTreeSet<String>,
    pub min_iteration: i64,
}

impl Default for RuleSet {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let sink = |id: &str, cwe: u32, api: &str, arg: i32, check: CheckKind, ty: TypeRef| {
            SinkRule {
                rule_id: id.to_string(),
                cwe,
                api: api.to_string(),
                arg_index: arg,
                check,
                expected_type: ty,
                severity: check.default_severity().to_string(),
            }
        };
        RuleSet {
            sinks: vec![
                sink("R2", 330, "java.security.SecureRandom.setSeed", 0, CheckKind::SeedSource, TypeRef::Bytes),
                sink("R3", 328, "java.security.MessageDigest.getInstance", 0, CheckKind::HashSpec, TypeRef::Str),
                sink("R4", 327, "javax.crypto.Cipher.getInstance", 0, CheckKind::CipherSpec, TypeRef::Str),
                sink("R5", 798, "java.security.KeyStore.load", 1, CheckKind::Constant, TypeRef::Str),
                sink("R6", 321, "javax.crypto.spec.SecretKeySpec.<init>", 0, CheckKind::KeyMaterial, TypeRef::Bytes),
                sink("R7", 798, "javax.crypto.spec.PBEKeySpec.<init>", 0, CheckKind::Constant, TypeRef::Str),
                sink("R8", 916, "javax.crypto.spec.PBEParameterSpec.<init>", 1, CheckKind::MinInt, TypeRef::Int),
                sink("R9", 760, "javax.crypto.spec.PBEParameterSpec.<init>", 0, CheckKind::Constant, TypeRef::Bytes),
                sink("R10", 329, "javax.crypto.spec.IvParameterSpec.<init>", 0, CheckKind::Constant, TypeRef::Bytes),
            ],
            sanitizer_classes: set(&["java.security.SecureRandom"]),
            verifier_classes: set(&["java.util.Random"]),
            weak_ciphers: set(&["DES", "RC2", "RC4", "Blowfish", "IDEA"]),
            weak_hashes: set(&["MD2", "MD5", "SHA1"]),
            block_ciphers: set(&["AES", "DES", "Blowfish", "RC2", "IDEA"]),
            secure_seed_sources: set(&["java.security.SecureRandom.generateSeed"]),
            verification_apis: set(&["checkValidity", "verify"]),
            min_iteration: 1000,
        }
    }
}

impl RuleSet {
    pub fn sink_by_id(&self, id: &str) -> Option<&SinkRule> {
        self.sinks.iter().find(|s| s.rule_id == id)
    }

    /// Class portion of a qualified API name (`a.b.C.m` -> `a.b.C`).
    pub fn class_of(api: &str) -> &str {
        api.rsplit_once('.').map(|(c, _)| c).unwrap_or(api)
    }

    pub fn is_sanitizer_api(&self, qualified: &str) -> bool {
        self.sanitizer_classes.contains(Self::class_of(qualified))
    }

    pub fn is_verifier_api(&self, qualified: &str) -> bool {
        self.verifier_classes.contains(Self::class_of(qualified))
    }

    pub fn is_secure_seed_source(&self, qualified: &str) -> bool {
        self.secure_seed_sources.contains(qualified)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("rules line {line}: {msg}")]
pub struct RulesError {
    pub line: usize,
    pub msg: String,
}

fn type_ref(s: &str) -> TypeRef {
    match s {
        "int" => TypeRef::Int,
        "long" => TypeRef::Long,
        "bool" => TypeRef::Bool,
        "bytes" => TypeRef::Bytes,
        "String" => TypeRef::Str,
        other => TypeRef::Class(other.to_string()),
    }
}

fn split_list(s: &str) -> BTreeSet<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

/// Parse a rules file. Omitted sections keep their defaults; `=` replaces a
/// set, `+=` extends it; unknown directives are rejected.
pub fn load_rules(text: &str) -> Result<RuleSet, RulesError> {
    let mut rs = RuleSet::default();
    let mut saw_sink = false;
    let mut saw_sanitizer = false;
    let mut saw_verifier = false;
    let mut saw_secure_seed = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| RulesError { line: lineno, msg };
        let mut words = line.split_whitespace();
        match words.next().unwrap() {
            "weakset" => {
                let name = words.next().ok_or_else(|| err("missing set name".into()))?;
                let rest = line.splitn(2, name).nth(1).unwrap_or("").trim();
                let (extend, values) = if let Some(v) = rest.strip_prefix("+=") {
                    (true, v)
                } else if let Some(v) = rest.strip_prefix('=') {
                    (false, v)
                } else {
                    return Err(err("expected '=' or '+='".into()));
                };
                let vals = split_list(values);
                let target = match name {
                    "ciphers" => &mut rs.weak_ciphers,
                    "hashes" => &mut rs.weak_hashes,
                    "blockciphers" => &mut rs.block_ciphers,
                    other => return Err(err(format!("unknown weakset '{other}'"))),
                };
                if extend {
                    target.extend(vals);
                } else {
                    *target = vals;
                }
            }
            "minimum" => {
                // `minimum iteration = N`
                if words.next() != Some("iteration") {
                    return Err(err("expected 'minimum iteration = N'".into()));
                }
                let rest = line.splitn(2, '=').nth(1).ok_or_else(|| err("missing '='".into()))?;
                rs.min_iteration = rest
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad iteration count '{}'", rest.trim())))?;
            }
            "sink" => {
                if !saw_sink {
                    // First explicit sink line replaces the default catalog.
                    rs.sinks.clear();
                    saw_sink = true;
                }
                let id = words.next().ok_or_else(|| err("missing rule id".into()))?;
                let mut cwe = None;
                let mut api = None;
                let mut arg = None;
                let mut check = None;
                let mut ty = None;
                let mut sev: Option<String> = None;
                for kv in words {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected key=value, got '{kv}'")))?;
                    match k {
                        "cwe" => {
                            cwe = Some(
                                v.parse::<u32>().map_err(|_| err(format!("bad cwe '{v}'")))?,
                            )
                        }
                        "api" => api = Some(v.to_string()),
                        "arg" => {
                            arg = Some(
                                v.parse::<i32>().map_err(|_| err(format!("bad arg '{v}'")))?,
                            )
                        }
                        "check" => {
                            check = Some(
                                CheckKind::parse(v)
                                    .ok_or_else(|| err(format!("unknown check '{v}'")))?,
                            )
                        }
                        "type" => ty = Some(type_ref(v)),
                        "sev" => sev = Some(v.to_string()),
                        other => return Err(err(format!("unknown sink key '{other}'"))),
                    }
                }
                let check = check.ok_or_else(|| err("sink missing check=".into()))?;
                rs.sinks.push(SinkRule {
                    rule_id: id.to_string(),
                    cwe: cwe.ok_or_else(|| err("sink missing cwe=".into()))?,
                    api: api.ok_or_else(|| err("sink missing api=".into()))?,
                    arg_index: arg.ok_or_else(|| err("sink missing arg=".into()))?,
                    check,
                    expected_type: ty.ok_or_else(|| err("sink missing type=".into()))?,
                    severity: sev.unwrap_or_else(|| check.default_severity().to_string()),
                });
                if check == CheckKind::MinInt
                    && rs.sinks.last().unwrap().expected_type != TypeRef::Int
                {
                    return Err(err("min-int check requires type=int".into()));
                }
            }
            "sanitizer" => {
                if words.next() != Some("class") {
                    return Err(err("expected 'sanitizer class NAME'".into()));
                }
                let name = words.next().ok_or_else(|| err("missing class name".into()))?;
                if !saw_sanitizer {
                    rs.sanitizer_classes.clear();
                    saw_sanitizer = true;
                }
                rs.sanitizer_classes.insert(name.to_string());
            }
            "verifier" => {
                if words.next() != Some("class") {
                    return Err(err("expected 'verifier class NAME'".into()));
                }
                let name = words.next().ok_or_else(|| err("missing class name".into()))?;
                if !saw_verifier {
                    rs.verifier_classes.clear();
                    saw_verifier = true;
                }
                rs.verifier_classes.insert(name.to_string());
            }
            "secure-seed" => {
                let name = words.next().ok_or_else(|| err("missing api name".into()))?;
                if !saw_secure_seed {
                    rs.secure_seed_sources.clear();
                    saw_secure_seed = true;
                }
                rs.secure_seed_sources.insert(name.to_string());
            }
            "verifyapi" => {
                let rest = line.strip_prefix("verifyapi").unwrap();
                rs.verification_apis = split_list(rest);
            }
            other => return Err(err(format!("unknown directive '{other}'"))),
        }
    }
    Ok(rs)
}

/// Canonical text form; `load_rules(dump_rules(rs)) == rs`.
pub fn dump_rules(rs: &RuleSet) -> String {
    let list = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(", ");
    let mut out = String::new();
    writeln!(out, "weakset ciphers = {}", list(&rs.weak_ciphers)).unwrap();
    writeln!(out, "weakset hashes = {}", list(&rs.weak_hashes)).unwrap();
    writeln!(out, "weakset blockciphers = {}", list(&rs.block_ciphers)).unwrap();
    writeln!(out, "minimum iteration = {}", rs.min_iteration).unwrap();
    for s in &rs.sinks {
        write!(
            out,
            "sink {} cwe={} api={} arg={} check={} type={}",
            s.rule_id,
            s.cwe,
            s.api,
            s.arg_index,
            s.check.name(),
            s.expected_type
        )
        .unwrap();
        if s.severity != s.check.default_severity() {
            write!(out, " sev={}", s.severity).unwrap();
        }
        out.push('\n');
    }
    for c in &rs.sanitizer_classes {
        writeln!(out, "sanitizer class {c}").unwrap();
    }
    for c in &rs.verifier_classes {
        writeln!(out, "verifier class {c}").unwrap();
    }
    for s in &rs.secure_seed_sources {
        writeln!(out, "secure-seed {s}").unwrap();
    }
    writeln!(out, "verifyapi {}", list(&rs.verification_apis)).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(load_rules("").unwrap(), RuleSet::default());
    }

    #[test]
    fn extend_weakset() {
        let rs = load_rules("weakset hashes += SHA224\n").unwrap();
        assert!(rs.weak_hashes.contains("SHA224"));
        assert!(rs.weak_hashes.contains("MD5"));
    }

    #[test]
    fn replace_weakset() {
        let rs = load_rules("weakset ciphers = DES\n").unwrap();
        assert_eq!(rs.weak_ciphers.iter().collect::<Vec<_>>(), ["DES"]);
    }

    #[test]
    fn unknown_directive_rejected() {
        let e = load_rules("frobnicate = yes\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.msg.contains("unknown directive"));
    }

    #[test]
    fn dump_load_round_trip_is_stable() {
        let d1 = dump_rules(&RuleSet::default());
        let rs = load_rules(&d1).unwrap();
        assert_eq!(rs, RuleSet::default());
        assert_eq!(dump_rules(&rs), d1);
    }

    #[test]
    fn sink_line_parses() {
        let rs = load_rules(
            "sink R99 cwe=123 api=com.example.Api.use arg=2 check=constant type=String\n",
        )
        .unwrap();
        assert_eq!(rs.sinks.len(), 1);
        let s = &rs.sinks[0];
        assert_eq!(s.rule_id, "R99");
        assert_eq!(s.cwe, 123);
        assert_eq!(s.arg_index, 2);
        assert_eq!(s.check, CheckKind::Constant);
        assert_eq!(s.expected_type, TypeRef::Str);
        assert_eq!(s.severity, "high");
    }

    #[test]
    fn default_min_iteration() {
        assert_eq!(RuleSet::default().min_iteration, 1000);
        let rs = load_rules("minimum iteration = 4096\n").unwrap();
        assert_eq!(rs.min_iteration, 4096);
    }
}
