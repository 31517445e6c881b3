//! Input forging: schema-valid seed generation and the fixed set of
//! mutation operators that the agent chooses from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use regex_syntax::hir::{Class, Hir, HirKind};
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::ForgeError;
use crate::model::{ApiModel, SchemaKind, SchemaNode};
use crate::scenario::ScenarioStep;
use crate::value::FuzzValue;

pub const LONG_STRING_LEN: usize = 4096;

/// Integer values tried by `BoundaryNumber`: sign edges and common width limits.
pub const INT_BOUNDARIES: [i64; 9] = [
    -1,
    0,
    1,
    255,
    256,
    65_535,
    65_536,
    i32::MIN as i64,
    i32::MAX as i64,
];

pub const FLOAT_BOUNDARIES: [f64; 8] = [
    0.0,
    -0.0,
    1.0,
    -1.0,
    f64::MIN_POSITIVE,
    f64::EPSILON,
    f64::MAX,
    f64::MIN,
];

/// `HugeNumber` replacements: +(2^63 - 1), -(2^63 - 1) and 1e308.
pub const HUGE_VALUES: [FuzzValue; 3] = [
    FuzzValue::Integer(i64::MAX),
    FuzzValue::Integer(-i64::MAX),
    FuzzValue::Float(1e308),
];

/// The twelve mutation operators. Discriminants are the stable operator ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum MutationOp {
    BoundaryNumber = 0,
    NegateNumber = 1,
    HugeNumber = 2,
    EmptyString = 3,
    LongString = 4,
    TypeConfusion = 5,
    DropRequiredField = 6,
    DuplicateKey = 7,
    InjectionToken = 8,
    ByteFlip = 9,
    NullSubstitute = 10,
    FormatBreak = 11,
}

impl MutationOp {
    pub const COUNT: usize = 12;

    pub const ALL: [MutationOp; 12] = [
        MutationOp::BoundaryNumber,
        MutationOp::NegateNumber,
        MutationOp::HugeNumber,
        MutationOp::EmptyString,
        MutationOp::LongString,
        MutationOp::TypeConfusion,
        MutationOp::DropRequiredField,
        MutationOp::DuplicateKey,
        MutationOp::InjectionToken,
        MutationOp::ByteFlip,
        MutationOp::NullSubstitute,
        MutationOp::FormatBreak,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<MutationOp> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MutationOp::BoundaryNumber => "BoundaryNumber",
            MutationOp::NegateNumber => "NegateNumber",
            MutationOp::HugeNumber => "HugeNumber",
            MutationOp::EmptyString => "EmptyString",
            MutationOp::LongString => "LongString",
            MutationOp::TypeConfusion => "TypeConfusion",
            MutationOp::DropRequiredField => "DropRequiredField",
            MutationOp::DuplicateKey => "DuplicateKey",
            MutationOp::InjectionToken => "InjectionToken",
            MutationOp::ByteFlip => "ByteFlip",
            MutationOp::NullSubstitute => "NullSubstitute",
            MutationOp::FormatBreak => "FormatBreak",
        }
    }

    pub fn from_name(name: &str) -> Option<MutationOp> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }
}

impl fmt::Display for MutationOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Concrete values for the fuzzed parameters of one scenario step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputVector {
    pub step_index: usize,
    pub values: BTreeMap<String, FuzzValue>,
    /// Parameters withheld from the request by `DropRequiredField`.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub omitted: BTreeSet<String>,
    /// Parameters sent twice, marked by `DuplicateKey`.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub duplicated: BTreeSet<String>,
    pub lineage: Vec<MutationOp>,
}

impl InputVector {
    pub fn empty(step_index: usize) -> Self {
        InputVector {
            step_index,
            values: BTreeMap::new(),
            omitted: BTreeSet::new(),
            duplicated: BTreeSet::new(),
            lineage: Vec::new(),
        }
    }
}

const ALNUM: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
const DEFAULT_SPAN: i64 = 1000;
const PATTERN_ATTEMPTS: usize = 64;

/// Draws a value that conforms to `schema`.
pub fn generate_valid<R: Rng + ?Sized>(
    schema: &SchemaNode,
    rng: &mut R,
) -> Result<FuzzValue, ForgeError> {
    let c = &schema.constraints;
    if !c.enum_values.is_empty() {
        let pick = c.enum_values.choose(rng).expect("non-empty");
        return Ok(FuzzValue::from_json(pick));
    }
    match schema.kind {
        SchemaKind::Integer => gen_integer(schema, rng).map(FuzzValue::Integer),
        SchemaKind::Number => gen_number(schema, rng).map(FuzzValue::Float),
        SchemaKind::Boolean => Ok(FuzzValue::Boolean(rng.gen())),
        SchemaKind::String => gen_string(schema, rng).map(FuzzValue::Text),
        SchemaKind::Array => {
            let (lo, hi) = count_range(c.min_items, c.max_items, 3);
            let n = rng.gen_range(lo..=hi);
            let any = SchemaNode::new(SchemaKind::Any);
            let items = schema.items.as_deref().unwrap_or(&any);
            (0..n)
                .map(|_| generate_valid(items, rng))
                .collect::<Result<_, _>>()
                .map(FuzzValue::Array)
        }
        SchemaKind::Object => {
            let mut fields = Vec::new();
            for (name, prop) in &schema.properties {
                if schema.required.contains(name) || rng.gen_bool(0.5) {
                    fields.push((name.clone(), generate_valid(prop, rng)?));
                }
            }
            Ok(FuzzValue::Object(fields))
        }
        SchemaKind::Any => Ok(match rng.gen_range(0..3) {
            0 => FuzzValue::Integer(rng.gen_range(0..=DEFAULT_SPAN)),
            1 => FuzzValue::Boolean(rng.gen()),
            _ => FuzzValue::Text(alnum(rng, 8)),
        }),
    }
}

fn count_range(lo: Option<u64>, hi: Option<u64>, span: u64) -> (u64, u64) {
    match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        (Some(l), None) => (l, l + span),
        (None, Some(h)) => (0, h.min(span)),
        (None, None) => (0, span),
    }
}

fn gen_integer<R: Rng + ?Sized>(schema: &SchemaNode, rng: &mut R) -> Result<i64, ForgeError> {
    let c = &schema.constraints;
    let (type_lo, type_hi) = match c.format.as_deref() {
        Some("int32") => (i32::MIN as f64, i32::MAX as f64),
        _ => (i64::MIN as f64, i64::MAX as f64),
    };
    let lo = c.minimum.map(f64::ceil).unwrap_or(f64::NEG_INFINITY).max(type_lo);
    let hi = c.maximum.map(f64::floor).unwrap_or(f64::INFINITY).min(type_hi);
    let (lo, hi) = match (lo.is_finite() && c.minimum.is_some(), hi.is_finite() && c.maximum.is_some()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, (lo + DEFAULT_SPAN as f64).min(hi)),
        (false, true) => ((hi - DEFAULT_SPAN as f64).max(lo), hi),
        (false, false) => (0.0, DEFAULT_SPAN as f64),
    };
    if lo > hi {
        return Err(ForgeError::Generation(format!(
            "no integer in [{:?}, {:?}]",
            c.minimum, c.maximum
        )));
    }
    // i64 <-> f64 is lossy near the extremes; clamp after conversion.
    let (lo, hi) = (lo as i64, hi as i64);
    Ok(rng.gen_range(lo..=hi))
}

fn gen_number<R: Rng + ?Sized>(schema: &SchemaNode, rng: &mut R) -> Result<f64, ForgeError> {
    let c = &schema.constraints;
    let span = DEFAULT_SPAN as f64;
    let (lo, hi) = match (c.minimum, c.maximum) {
        (Some(l), Some(h)) => (l, h),
        (Some(l), None) => (l, l + span),
        (None, Some(h)) => (h - span, h),
        (None, None) => (0.0, span),
    };
    if lo > hi || !lo.is_finite() || !hi.is_finite() {
        return Err(ForgeError::Generation(format!("no number in [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(lo);
    }
    let x = rng.gen_range(lo..=hi);
    Ok(x.clamp(lo, hi))
}

fn alnum<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    (0..len)
        .map(|_| ALNUM[rng.gen_range(0..ALNUM.len())] as char)
        .collect()
}

fn gen_string<R: Rng + ?Sized>(schema: &SchemaNode, rng: &mut R) -> Result<String, ForgeError> {
    let c = &schema.constraints;
    let (lo, hi) = match (c.min_length, c.max_length) {
        (Some(l), Some(h)) => (l, h),
        (Some(l), None) => (l, l + 12),
        (None, Some(h)) => (h.min(1), h.min(12)),
        (None, None) => (1, 12),
    };
    if lo > hi {
        return Err(ForgeError::Generation(format!("no string with length in [{lo}, {hi}]")));
    }
    let fits = |s: &str| {
        let n = s.chars().count() as u64;
        n >= lo && n <= hi
    };

    if let Some(pattern) = &c.pattern {
        let re = regex::Regex::new(pattern)
            .map_err(|e| ForgeError::Generation(format!("bad pattern `{pattern}`: {e}")))?;
        let hir = regex_syntax::parse(pattern)
            .map_err(|e| ForgeError::Generation(format!("bad pattern `{pattern}`: {e}")))?;
        for _ in 0..PATTERN_ATTEMPTS {
            let mut s = String::new();
            gen_from_hir(&hir, rng, &mut s);
            if fits(&s) && re.is_match(&s) {
                return Ok(s);
            }
        }
        return Err(ForgeError::Generation(format!(
            "could not satisfy pattern `{pattern}` within length [{lo}, {hi}]"
        )));
    }

    if let Some(format) = c.format.as_deref() {
        if let Some(s) = gen_format(format, rng) {
            // Only declared bounds apply; the fallback span above does not.
            let n = s.chars().count() as u64;
            if c.min_length.map_or(true, |m| n >= m) && c.max_length.map_or(true, |m| n <= m) {
                return Ok(s);
            }
        }
    }
    let len = rng.gen_range(lo..=hi) as usize;
    Ok(alnum(rng, len))
}

fn gen_format<R: Rng + ?Sized>(format: &str, rng: &mut R) -> Option<String> {
    Some(match format {
        "date" => format!(
            "{:04}-{:02}-{:02}",
            rng.gen_range(1970..2100),
            rng.gen_range(1..=12),
            rng.gen_range(1..=28)
        ),
        "date-time" => format!(
            "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z",
            rng.gen_range(1970..2100),
            rng.gen_range(1..=12),
            rng.gen_range(1..=28),
            rng.gen_range(0..24),
            rng.gen_range(0..60),
            rng.gen_range(0..60)
        ),
        "email" => format!("{}@{}.test", alnum(rng, 6).to_lowercase(), alnum(rng, 5).to_lowercase()),
        "uuid" => {
            let b: [u8; 16] = rng.gen();
            let h = hex::encode(b);
            format!("{}-{}-{}-{}-{}", &h[0..8], &h[8..12], &h[12..16], &h[16..20], &h[20..32])
        }
        "uri" | "url" => format!("http://{}.test/{}", alnum(rng, 6).to_lowercase(), alnum(rng, 4)),
        "hostname" => format!("{}.test", alnum(rng, 8).to_lowercase()),
        "ipv4" => format!(
            "{}.{}.{}.{}",
            rng.gen_range(1..=254),
            rng.gen::<u8>(),
            rng.gen::<u8>(),
            rng.gen_range(1..=254)
        ),
        _ => return None,
    })
}

const MAX_PATTERN_REPEAT: u32 = 8;

fn gen_from_hir<R: Rng + ?Sized>(hir: &Hir, rng: &mut R, out: &mut String) {
    match hir.kind() {
        HirKind::Empty | HirKind::Look(_) => {}
        HirKind::Literal(lit) => out.push_str(&String::from_utf8_lossy(&lit.0)),
        HirKind::Class(Class::Unicode(cls)) => {
            let ranges = cls.ranges();
            if ranges.is_empty() {
                return;
            }
            // Prefer printable ASCII subranges so values survive URLs.
            let r = ranges.choose(rng).expect("non-empty");
            let (s, e) = (r.start() as u32, r.end() as u32);
            let e = if s < 0x80 { e.min(0x7e).max(s) } else { e };
            if let Some(c) = char::from_u32(rng.gen_range(s..=e)) {
                out.push(c);
            } else {
                out.push(r.start());
            }
        }
        HirKind::Class(Class::Bytes(cls)) => {
            if let Some(r) = cls.ranges().choose(rng) {
                let b = rng.gen_range(r.start()..=r.end());
                out.push(b as char);
            }
        }
        HirKind::Repetition(rep) => {
            let max = rep.max.unwrap_or(rep.min + MAX_PATTERN_REPEAT).min(rep.min + MAX_PATTERN_REPEAT);
            let n = rng.gen_range(rep.min..=max);
            for _ in 0..n {
                gen_from_hir(&rep.sub, rng, out);
            }
        }
        HirKind::Capture(cap) => gen_from_hir(&cap.sub, rng, out),
        HirKind::Concat(parts) => parts.iter().for_each(|p| gen_from_hir(p, rng, out)),
        HirKind::Alternation(alts) => {
            if let Some(a) = alts.choose(rng) {
                gen_from_hir(a, rng, out);
            }
        }
    }
}

/// Keys of the step's parameters that the fuzzer controls, in declaration
/// order. These index the agent's actions.
pub fn fuzz_parameters(step: &ScenarioStep, model: &ApiModel) -> Vec<String> {
    let Ok(op) = model.lookup_operation(&step.operation_id) else {
        return Vec::new();
    };
    op.param_keys()
        .into_iter()
        .filter(|k| step.is_fuzzed(k))
        .collect()
}

/// Generates `size` input vectors for a scenario step, one valid value per
/// fuzzed parameter.
pub fn seed_population<R: Rng + ?Sized>(
    step: &ScenarioStep,
    step_index: usize,
    model: &ApiModel,
    size: usize,
    rng: &mut R,
) -> Result<Vec<InputVector>, ForgeError> {
    let op = model
        .lookup_operation(&step.operation_id)
        .map_err(|e| ForgeError::Generation(e.to_string()))?;
    let keys = fuzz_parameters(step, model);
    (0..size)
        .map(|_| {
            let mut v = InputVector::empty(step_index);
            for key in &keys {
                let (_, param) = op.param_by_key(key).expect("key from this operation");
                v.values.insert(key.clone(), generate_valid(&param.schema, rng)?);
            }
            Ok(v)
        })
        .collect()
}

/// Applies mutation operators. Holds the injection dictionary.
#[derive(Debug, Clone)]
pub struct Mutator {
    dictionary: Dictionary,
}

impl Default for Mutator {
    fn default() -> Self {
        Mutator {
            dictionary: Dictionary::builtin(),
        }
    }
}

impl Mutator {
    pub fn new(dictionary: Dictionary) -> Self {
        Mutator { dictionary }
    }

    /// Returns a copy of `vector` with `op` applied at `target`. The input is
    /// never modified.
    pub fn mutate<R: Rng + ?Sized>(
        &self,
        vector: &InputVector,
        target: &str,
        op: MutationOp,
        rng: &mut R,
    ) -> Result<InputVector, ForgeError> {
        let current = vector
            .values
            .get(target)
            .ok_or_else(|| ForgeError::UnknownParameter(target.to_string()))?;
        let inapplicable = || ForgeError::InapplicableMutation {
            op: op.name(),
            kind: current.kind_name(),
        };
        let mut out = vector.clone();

        let replaced = match (op, current) {
            (MutationOp::BoundaryNumber, FuzzValue::Integer(_)) => {
                Some(FuzzValue::Integer(*INT_BOUNDARIES.choose(rng).expect("non-empty")))
            }
            (MutationOp::BoundaryNumber, FuzzValue::Float(_)) => {
                Some(FuzzValue::Float(*FLOAT_BOUNDARIES.choose(rng).expect("non-empty")))
            }
            (MutationOp::NegateNumber, FuzzValue::Integer(i)) => {
                Some(FuzzValue::Integer(i.checked_neg().unwrap_or(i64::MAX)))
            }
            (MutationOp::NegateNumber, FuzzValue::Float(f)) => Some(FuzzValue::Float(-f)),
            (MutationOp::HugeNumber, FuzzValue::Integer(_) | FuzzValue::Float(_)) => {
                Some(HUGE_VALUES.choose(rng).expect("non-empty").clone())
            }
            (MutationOp::EmptyString, FuzzValue::Text(_) | FuzzValue::Bytes(_)) => {
                Some(FuzzValue::Text(String::new()))
            }
            (MutationOp::LongString, FuzzValue::Text(_) | FuzzValue::Bytes(_)) => {
                Some(FuzzValue::Text("A".repeat(LONG_STRING_LEN)))
            }
            (MutationOp::TypeConfusion, v) => Some(type_confusion(v)),
            (MutationOp::DropRequiredField, FuzzValue::Object(fields)) if !fields.is_empty() => {
                let mut fields = fields.clone();
                fields.remove(rng.gen_range(0..fields.len()));
                Some(FuzzValue::Object(fields))
            }
            (MutationOp::DropRequiredField, _) => {
                if !out.omitted.insert(target.to_string()) {
                    return Err(inapplicable());
                }
                None
            }
            (MutationOp::DuplicateKey, FuzzValue::Object(fields)) if !fields.is_empty() => {
                let mut fields = fields.clone();
                let copy = fields[rng.gen_range(0..fields.len())].clone();
                fields.push(copy);
                Some(FuzzValue::Object(fields))
            }
            (MutationOp::DuplicateKey, _) => {
                if !out.duplicated.insert(target.to_string()) {
                    return Err(inapplicable());
                }
                None
            }
            (MutationOp::InjectionToken, FuzzValue::Array(_) | FuzzValue::Object(_)) => {
                return Err(inapplicable())
            }
            (MutationOp::InjectionToken, _) => {
                Some(FuzzValue::Text(self.dictionary.pick(rng).to_string()))
            }
            (MutationOp::ByteFlip, FuzzValue::Text(s)) if !s.is_empty() => {
                Some(FuzzValue::Bytes(flip_byte(s.as_bytes(), rng)))
            }
            (MutationOp::ByteFlip, FuzzValue::Bytes(b)) if !b.is_empty() => {
                Some(FuzzValue::Bytes(flip_byte(b, rng)))
            }
            (MutationOp::NullSubstitute, FuzzValue::Null) => return Err(inapplicable()),
            (MutationOp::NullSubstitute, _) => Some(FuzzValue::Null),
            (MutationOp::FormatBreak, FuzzValue::Text(s)) => Some(FuzzValue::Text(break_format(s, rng))),
            (MutationOp::FormatBreak, FuzzValue::Integer(i)) => Some(FuzzValue::Text(format!("{i}.0.0"))),
            (MutationOp::FormatBreak, FuzzValue::Float(f)) => {
                Some(FuzzValue::Text(format!("{}e", crate::value::float_repr(*f))))
            }
            _ => return Err(inapplicable()),
        };

        if let Some(v) = replaced {
            out.values.insert(target.to_string(), v);
            out.omitted.remove(target);
        }
        out.lineage.push(op);
        Ok(out)
    }
}

/// [`Mutator::mutate`] with the built-in dictionary.
pub fn mutate<R: Rng + ?Sized>(
    vector: &InputVector,
    target: &str,
    op: MutationOp,
    rng: &mut R,
) -> Result<InputVector, ForgeError> {
    Mutator::default().mutate(vector, target, op, rng)
}

/// The fixed coercion table used by `TypeConfusion`.
pub fn type_confusion(v: &FuzzValue) -> FuzzValue {
    match v {
        FuzzValue::Integer(i) => FuzzValue::Text(i.to_string()),
        FuzzValue::Float(f) => FuzzValue::Text(crate::value::float_repr(*f)),
        FuzzValue::Text(s) => {
            if let Ok(i) = s.parse::<i64>() {
                FuzzValue::Integer(i)
            } else if let Some(f) = s.parse::<f64>().ok().filter(|f| f.is_finite()) {
                FuzzValue::Float(f)
            } else {
                FuzzValue::Array(vec![FuzzValue::Text(s.clone())])
            }
        }
        FuzzValue::Boolean(b) => FuzzValue::Integer(*b as i64),
        FuzzValue::Null => FuzzValue::Integer(0),
        FuzzValue::Array(items) => FuzzValue::Object(
            items
                .iter()
                .enumerate()
                .map(|(i, v)| (i.to_string(), v.clone()))
                .collect(),
        ),
        FuzzValue::Object(fields) => {
            FuzzValue::Array(fields.iter().map(|(_, v)| v.clone()).collect())
        }
        FuzzValue::Bytes(b) => FuzzValue::Text(String::from_utf8_lossy(b).into_owned()),
    }
}

fn flip_byte<R: Rng + ?Sized>(bytes: &[u8], rng: &mut R) -> Vec<u8> {
    let mut out = bytes.to_vec();
    let i = rng.gen_range(0..out.len());
    out[i] ^= 0xFF;
    out
}

fn break_format<R: Rng + ?Sized>(s: &str, rng: &mut R) -> String {
    match rng.gen_range(0..4) {
        0 => format!("{s}%zz"),
        1 => format!("\0{s}"),
        2 => s.chars().rev().collect(),
        _ => {
            let half: String = s.chars().take(s.chars().count() / 2).collect();
            format!("{half}\u{fffd}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn vector(entries: &[(&str, FuzzValue)]) -> InputVector {
        let mut v = InputVector::empty(0);
        for (k, val) in entries {
            v.values.insert(k.to_string(), val.clone());
        }
        v
    }

    #[test]
    fn op_ids_are_a_fixed_bijection() {
        for (i, op) in MutationOp::ALL.iter().enumerate() {
            assert_eq!(op.id() as usize, i);
            assert_eq!(MutationOp::from_id(i as u8), Some(*op));
            assert_eq!(MutationOp::from_name(op.name()), Some(*op));
        }
        assert_eq!(MutationOp::from_id(12), None);
        assert_eq!(MutationOp::InjectionToken.id(), 8);
    }

    #[test]
    fn singleton_integer_range() {
        let s = SchemaNode::integer().with_range(Some(0.0), Some(0.0));
        assert_eq!(generate_valid(&s, &mut rng()).unwrap(), FuzzValue::Integer(0));
    }

    #[test]
    fn enum_closure() {
        let s = SchemaNode::string().with_enum(vec!["a".into(), "b".into()]);
        let mut r = rng();
        for _ in 0..50 {
            let v = generate_valid(&s, &mut r).unwrap();
            assert!(v == FuzzValue::Text("a".into()) || v == FuzzValue::Text("b".into()));
        }
    }

    #[test]
    fn empty_integer_interval_is_generation_error() {
        let s = SchemaNode::integer().with_range(Some(0.5), Some(0.7));
        assert!(matches!(generate_valid(&s, &mut rng()), Err(ForgeError::Generation(_))));
    }

    #[test]
    fn pattern_respected() {
        let mut s = SchemaNode::string();
        s.constraints.pattern = Some("^[a-z]{3}-[0-9]{2,4}$".into());
        let re = regex::Regex::new("^[a-z]{3}-[0-9]{2,4}$").unwrap();
        let mut r = rng();
        for _ in 0..100 {
            match generate_valid(&s, &mut r).unwrap() {
                FuzzValue::Text(t) => assert!(re.is_match(&t), "{t}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn negate() {
        let v = vector(&[("x", FuzzValue::Integer(5))]);
        let m = mutate(&v, "x", MutationOp::NegateNumber, &mut rng()).unwrap();
        assert_eq!(m.values["x"], FuzzValue::Integer(-5));
        assert_eq!(m.lineage, vec![MutationOp::NegateNumber]);
        assert_eq!(v.values["x"], FuzzValue::Integer(5));
        assert!(v.lineage.is_empty());
    }

    #[test]
    fn empty_string() {
        let v = vector(&[("s", FuzzValue::Text("abc".into()))]);
        let m = mutate(&v, "s", MutationOp::EmptyString, &mut rng()).unwrap();
        assert_eq!(m.values["s"], FuzzValue::Text(String::new()));
    }

    #[test]
    fn type_confusion_number_to_text() {
        let v = vector(&[("x", FuzzValue::Integer(5))]);
        let m = mutate(&v, "x", MutationOp::TypeConfusion, &mut rng()).unwrap();
        assert_eq!(m.values["x"], FuzzValue::Text("5".into()));
    }

    #[test]
    fn type_confusion_table() {
        use FuzzValue::*;
        let cases = vec![
            (Integer(5), Text("5".into())),
            (Float(1.5), Text("1.5".into())),
            (Text("42".into()), Integer(42)),
            (Text("2.5".into()), Float(2.5)),
            (Text("abc".into()), Array(vec![Text("abc".into())])),
            (Boolean(true), Integer(1)),
            (Boolean(false), Integer(0)),
            (Null, Integer(0)),
            (
                Array(vec![Integer(1), Integer(2)]),
                Object(vec![("0".into(), Integer(1)), ("1".into(), Integer(2))]),
            ),
            (Object(vec![("k".into(), Boolean(true))]), Array(vec![Boolean(true)])),
            (Bytes(b"hi".to_vec()), Text("hi".into())),
        ];
        for (input, expected) in cases {
            assert_eq!(type_confusion(&input), expected, "{input:?}");
        }
    }

    #[test]
    fn inapplicable_kinds() {
        let v = vector(&[("b", FuzzValue::Boolean(true))]);
        for op in [
            MutationOp::BoundaryNumber,
            MutationOp::NegateNumber,
            MutationOp::HugeNumber,
            MutationOp::EmptyString,
            MutationOp::LongString,
            MutationOp::ByteFlip,
        ] {
            assert!(matches!(
                mutate(&v, "b", op, &mut rng()),
                Err(ForgeError::InapplicableMutation { .. })
            ));
        }
        let n = vector(&[("n", FuzzValue::Null)]);
        assert!(mutate(&n, "n", MutationOp::NullSubstitute, &mut rng()).is_err());
        assert!(matches!(
            mutate(&v, "missing", MutationOp::NullSubstitute, &mut rng()),
            Err(ForgeError::UnknownParameter(_))
        ));
    }

    #[test]
    fn long_string_and_huge_number() {
        let v = vector(&[("s", FuzzValue::Text("x".into())), ("n", FuzzValue::Integer(3))]);
        let m = mutate(&v, "s", MutationOp::LongString, &mut rng()).unwrap();
        assert!(matches!(&m.values["s"], FuzzValue::Text(t) if t.len() == LONG_STRING_LEN));
        assert_eq!(m.values["n"], FuzzValue::Integer(3));
        let m = mutate(&v, "n", MutationOp::HugeNumber, &mut rng()).unwrap();
        assert!(HUGE_VALUES.contains(&m.values["n"]));
    }

    #[test]
    fn structural_ops() {
        let obj = FuzzValue::Object(vec![("a".into(), FuzzValue::Integer(1))]);
        let v = vector(&[("o", obj), ("s", FuzzValue::Text("t".into()))]);
        let m = mutate(&v, "o", MutationOp::DuplicateKey, &mut rng()).unwrap();
        assert_eq!(
            m.values["o"],
            FuzzValue::Object(vec![
                ("a".into(), FuzzValue::Integer(1)),
                ("a".into(), FuzzValue::Integer(1))
            ])
        );
        let m = mutate(&v, "o", MutationOp::DropRequiredField, &mut rng()).unwrap();
        assert_eq!(m.values["o"], FuzzValue::Object(vec![]));

        let m = mutate(&v, "s", MutationOp::DropRequiredField, &mut rng()).unwrap();
        assert!(m.omitted.contains("s"));
        assert!(mutate(&m, "s", MutationOp::DropRequiredField, &mut rng()).is_err());
        let back = mutate(&m, "s", MutationOp::EmptyString, &mut rng()).unwrap();
        assert!(!back.omitted.contains("s"));

        let m = mutate(&v, "s", MutationOp::DuplicateKey, &mut rng()).unwrap();
        assert!(m.duplicated.contains("s"));
    }

    #[test]
    fn byte_flip_produces_raw_bytes() {
        let v = vector(&[("s", FuzzValue::Text("abc".into()))]);
        let m = mutate(&v, "s", MutationOp::ByteFlip, &mut rng()).unwrap();
        match &m.values["s"] {
            FuzzValue::Bytes(b) => {
                assert_eq!(b.len(), 3);
                let diffs = b.iter().zip(b"abc").filter(|(x, y)| x != y).count();
                assert_eq!(diffs, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn injection_uses_dictionary() {
        let v = vector(&[("q", FuzzValue::Integer(1))]);
        let m = mutate(&v, "q", MutationOp::InjectionToken, &mut rng()).unwrap();
        match &m.values["q"] {
            FuzzValue::Text(t) => assert!(Dictionary::builtin().tokens().contains(t)),
            other => panic!("{other:?}"),
        }
        let custom = Mutator::new(Dictionary::parse("ONLY\n").unwrap());
        let m = custom.mutate(&v, "q", MutationOp::InjectionToken, &mut rng()).unwrap();
        assert_eq!(m.values["q"], FuzzValue::Text("ONLY".into()));
    }
}
