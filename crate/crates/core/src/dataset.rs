//! Molecule records, client shards and the canonical `fedmol-v1` TSV format.
//!
//! File layout (UTF-8, LF):
//!
//! ```text
//! #fedmol-v1<TAB>F=2048
//! mol_id<TAB>scaffold<TAB>fp_hex<TAB>meta:journal<TAB>meta:year:num
//! MOL000001<TAB>c1ccccc1<TAB>00a4...<TAB>J Med Chem<TAB>2011
//! ```
//!
//! `fp_hex` holds exactly `F / 4` lowercase hex characters; bit 0 is the most
//! significant bit of the first character. Missing metadata is written `NA`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::seed::rng_from;

pub const FORMAT_TAG: &str = "#fedmol-v1";
pub const NO_SCAFFOLD: &str = "NO_SCAFFOLD";
pub const MISSING: &str = "NA";
pub const DEFAULT_FINGERPRINT_BITS: usize = 2048;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: wrong hex length: expected {expected} chars, found {found}")]
    WrongHexLength {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid hex digit in fingerprint")]
    InvalidHex { line: usize },
    #[error("line {line}: duplicate mol_id {mol_id:?}")]
    DuplicateMolId { line: usize, mol_id: String },
    #[error("line {line}: inconsistent column count: expected {expected}, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: empty {field}")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: invalid numeric value {value:?} for group {group:?}")]
    InvalidNumeric {
        line: usize,
        group: String,
        value: String,
    },
    #[error("fingerprint length mismatch: {left} vs {right} bits")]
    LengthMismatch { left: usize, right: usize },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Fixed-length presence/absence bit vector.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    len: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_indices(len: usize, on: &[usize]) -> Self {
        let mut fp = Self::zeros(len);
        for &i in on {
            fp.set(i, true);
        }
        fp
    }

    /// Parses a bit string such as `"1100"` (bit 0 first).
    pub fn from_bit_str(bits: &str) -> Self {
        let on: Vec<usize> = bits
            .bytes()
            .enumerate()
            .filter(|(_, b)| *b == b'1')
            .map(|(i, _)| i)
            .collect();
        Self::from_indices(bits.len(), &on)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, on: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if on {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    /// Bits as a dense `{0,1}` real vector.
    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.len)
            .map(|i| if self.get(i) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn to_hex(&self) -> String {
        const DIGITS: &[u8; 16] = b"0123456789abcdef";
        let mut out = String::with_capacity(self.len / 4);
        for nibble in 0..self.len / 4 {
            let mut v = 0u8;
            for k in 0..4 {
                v = (v << 1) | u8::from(self.get(nibble * 4 + k));
            }
            out.push(DIGITS[v as usize] as char);
        }
        out
    }

    /// Decodes `len / 4` hex characters, MSB-first. Returns `None` on a bad digit.
    pub fn from_hex(hex: &str, len: usize) -> Option<Self> {
        if hex.len() * 4 != len {
            return None;
        }
        let mut fp = Self::zeros(len);
        for (nibble, c) in hex.chars().enumerate() {
            let v = c.to_digit(16)?;
            for k in 0..4 {
                if (v >> (3 - k)) & 1 == 1 {
                    fp.set(nibble * 4 + k, true);
                }
            }
        }
        Some(fp)
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({}b, {} on)", self.len, self.count_ones())
    }
}

/// `1 - |A∩B| / |A∪B|`, with two empty fingerprints at distance 0.
pub fn tanimoto_distance(a: &Fingerprint, b: &Fingerprint) -> Result<f64, DatasetError> {
    if a.len() != b.len() {
        return Err(DatasetError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let union = a.union_count(b);
    if union == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - a.intersection_count(b) as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetaValue {
    Categorical(String),
    Numeric(f64),
    Missing,
}

impl MetaValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, MetaValue::Missing)
    }
}

impl fmt::Display for MetaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaValue::Categorical(s) => f.write_str(s),
            MetaValue::Numeric(x) => write!(f, "{x}"),
            MetaValue::Missing => f.write_str(MISSING),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGroup {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureGroup {
    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
        }
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeRecord {
    pub mol_id: String,
    pub fingerprint: Fingerprint,
    pub scaffold: String,
    /// Values in manifest feature-group order.
    pub metadata: Vec<(String, MetaValue)>,
}

impl MoleculeRecord {
    pub fn meta(&self, group: &str) -> Option<&MetaValue> {
        self.metadata
            .iter()
            .find(|(name, _)| name == group)
            .map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub fingerprint_bits: usize,
    pub feature_groups: Vec<FeatureGroup>,
    pub record_count: usize,
}

/// One federation client's private records.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub client_id: usize,
    pub records: Vec<MoleculeRecord>,
}

impl ClientShard {
    pub fn new(client_id: usize, records: Vec<MoleculeRecord>) -> Result<Self, DatasetError> {
        let Some(first) = records.first() else {
            return Err(DatasetError::Inconsistent(format!(
                "client {client_id} shard is empty"
            )));
        };
        let bits = first.fingerprint.len();
        if let Some(bad) = records.iter().find(|r| r.fingerprint.len() != bits) {
            return Err(DatasetError::LengthMismatch {
                left: bits,
                right: bad.fingerprint.len(),
            });
        }
        Ok(Self { client_id, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fingerprint_bits(&self) -> usize {
        self.records[0].fingerprint.len()
    }

    pub fn fingerprints(&self) -> Vec<Fingerprint> {
        self.records.iter().map(|r| r.fingerprint.clone()).collect()
    }
}

/// Canonical file name of one client's partition.
pub fn shard_file_name(dataset: &str, client: usize) -> String {
    format!("{dataset}.client{client}.tsv")
}

fn header_columns(manifest: &DatasetManifest) -> Vec<String> {
    let mut cols = vec!["mol_id".to_owned(), "scaffold".to_owned(), "fp_hex".to_owned()];
    for g in &manifest.feature_groups {
        cols.push(match g.kind {
            FeatureKind::Categorical => format!("meta:{}", g.name),
            FeatureKind::Numeric => format!("meta:{}:num", g.name),
        });
    }
    cols
}

/// Serializes a dataset to the canonical text form.
pub fn render_dataset(
    manifest: &DatasetManifest,
    records: &[MoleculeRecord],
) -> Result<String, DatasetError> {
    check_consistency(manifest, records)?;
    let mut out = String::new();
    out.push_str(&format!("{FORMAT_TAG}\tF={}\n", manifest.fingerprint_bits));
    out.push_str(&header_columns(manifest).join("\t"));
    out.push('\n');
    for r in records {
        out.push_str(&r.mol_id);
        out.push('\t');
        out.push_str(&r.scaffold);
        out.push('\t');
        out.push_str(&r.fingerprint.to_hex());
        for (_, v) in &r.metadata {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

fn check_consistency(
    manifest: &DatasetManifest,
    records: &[MoleculeRecord],
) -> Result<(), DatasetError> {
    if manifest.fingerprint_bits == 0 || !manifest.fingerprint_bits.is_multiple_of(4) {
        return Err(DatasetError::Inconsistent(format!(
            "fingerprint length {} is not a positive multiple of 4",
            manifest.fingerprint_bits
        )));
    }
    if manifest.record_count != records.len() {
        return Err(DatasetError::Inconsistent(format!(
            "manifest declares {} records, got {}",
            manifest.record_count,
            records.len()
        )));
    }
    let mut seen = HashSet::new();
    for r in records {
        if r.fingerprint.len() != manifest.fingerprint_bits {
            return Err(DatasetError::LengthMismatch {
                left: manifest.fingerprint_bits,
                right: r.fingerprint.len(),
            });
        }
        if !seen.insert(r.mol_id.as_str()) {
            return Err(DatasetError::Inconsistent(format!(
                "duplicate mol_id {:?}",
                r.mol_id
            )));
        }
        let names_match = r.metadata.len() == manifest.feature_groups.len()
            && r
                .metadata
                .iter()
                .zip(&manifest.feature_groups)
                .all(|((n, _), g)| *n == g.name);
        if !names_match {
            return Err(DatasetError::Inconsistent(format!(
                "record {:?} metadata groups do not match the manifest",
                r.mol_id
            )));
        }
    }
    Ok(())
}

pub fn write_dataset(
    manifest: &DatasetManifest,
    records: &[MoleculeRecord],
    path: &Path,
) -> Result<(), DatasetError> {
    let text = render_dataset(manifest, records)?;
    fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_dataset(path: &Path) -> Result<(DatasetManifest, Vec<MoleculeRecord>), DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = dataset_name_from_path(path);
    parse_dataset(&text, &name)
}

/// Dataset name implied by a file name: the stem, minus any `.client<k>` suffix.
pub fn dataset_name_from_path(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match stem.rsplit_once(".client") {
        Some((base, k)) if !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) => {
            base.to_owned()
        }
        _ => stem,
    }
}

pub fn parse_dataset(
    text: &str,
    name: &str,
) -> Result<(DatasetManifest, Vec<MoleculeRecord>), DatasetError> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));

    let (ln, tag_line) = lines.next().unwrap_or((1, ""));
    let bits = parse_tag_line(tag_line).ok_or_else(|| DatasetError::MalformedHeader {
        line: ln,
        reason: format!("expected `{FORMAT_TAG}<TAB>F=<bits>`"),
    })?;
    if bits == 0 || bits % 4 != 0 {
        return Err(DatasetError::MalformedHeader {
            line: ln,
            reason: format!("F={bits} is not a positive multiple of 4"),
        });
    }

    let Some((ln, header)) = lines.next() else {
        return Err(DatasetError::MalformedHeader {
            line: 2,
            reason: "missing column header".into(),
        });
    };
    let feature_groups = parse_header(header, ln)?;
    let expected_cols = 3 + feature_groups.len();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != expected_cols {
            return Err(DatasetError::ColumnCount {
                line: ln,
                expected: expected_cols,
                found: cols.len(),
            });
        }
        let mol_id = cols[0];
        if mol_id.is_empty() {
            return Err(DatasetError::EmptyField {
                line: ln,
                field: "mol_id",
            });
        }
        if cols[1].is_empty() {
            return Err(DatasetError::EmptyField {
                line: ln,
                field: "scaffold",
            });
        }
        let hex = cols[2];
        if hex.len() != bits / 4 {
            return Err(DatasetError::WrongHexLength {
                line: ln,
                expected: bits / 4,
                found: hex.len(),
            });
        }
        if hex.bytes().any(|b| !matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(DatasetError::InvalidHex { line: ln });
        }
        let fingerprint =
            Fingerprint::from_hex(hex, bits).ok_or(DatasetError::InvalidHex { line: ln })?;
        if !seen.insert(mol_id.to_owned()) {
            return Err(DatasetError::DuplicateMolId {
                line: ln,
                mol_id: mol_id.to_owned(),
            });
        }
        let mut metadata = Vec::with_capacity(feature_groups.len());
        for (g, raw) in feature_groups.iter().zip(&cols[3..]) {
            let value = if *raw == MISSING {
                MetaValue::Missing
            } else {
                match g.kind {
                    FeatureKind::Categorical => MetaValue::Categorical((*raw).to_owned()),
                    FeatureKind::Numeric => match raw.parse::<f64>() {
                        Ok(x) if x.is_finite() => MetaValue::Numeric(x),
                        _ => {
                            return Err(DatasetError::InvalidNumeric {
                                line: ln,
                                group: g.name.clone(),
                                value: (*raw).to_owned(),
                            })
                        }
                    },
                }
            };
            metadata.push((g.name.clone(), value));
        }
        records.push(MoleculeRecord {
            mol_id: mol_id.to_owned(),
            fingerprint,
            scaffold: cols[1].to_owned(),
            metadata,
        });
    }

    let manifest = DatasetManifest {
        name: name.to_owned(),
        fingerprint_bits: bits,
        feature_groups,
        record_count: records.len(),
    };
    Ok((manifest, records))
}

fn parse_tag_line(line: &str) -> Option<usize> {
    let (tag, rest) = line.split_once('\t')?;
    if tag != FORMAT_TAG {
        return None;
    }
    rest.strip_prefix("F=")?.parse().ok()
}

fn parse_header(header: &str, line: usize) -> Result<Vec<FeatureGroup>, DatasetError> {
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 3 || cols[..3] != ["mol_id", "scaffold", "fp_hex"] {
        return Err(DatasetError::MalformedHeader {
            line,
            reason: "header must start with mol_id, scaffold, fp_hex".into(),
        });
    }
    let mut groups: Vec<FeatureGroup> = Vec::new();
    for col in &cols[3..] {
        let Some(spec) = col.strip_prefix("meta:") else {
            return Err(DatasetError::MalformedHeader {
                line,
                reason: format!("metadata column {col:?} lacks the `meta:` prefix"),
            });
        };
        let group = match spec.strip_suffix(":num") {
            Some(name) => FeatureGroup::numeric(name),
            None => FeatureGroup::categorical(spec),
        };
        if group.name.is_empty() || groups.iter().any(|g| g.name == group.name) {
            return Err(DatasetError::MalformedHeader {
                line,
                reason: format!("empty or duplicate metadata group {:?}", group.name),
            });
        }
        groups.push(group);
    }
    Ok(groups)
}

/// Parameters of the synthetic scaffold-blob generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_scaffolds: usize,
    pub molecules_per_scaffold: usize,
    pub bits_per_scaffold_core: usize,
    pub noise_bits: usize,
    pub fingerprint_bits: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(
        n_scaffolds: usize,
        molecules_per_scaffold: usize,
        bits_per_scaffold_core: usize,
        noise_bits: usize,
        fingerprint_bits: usize,
        seed: u64,
    ) -> Self {
        Self {
            n_scaffolds,
            molecules_per_scaffold,
            bits_per_scaffold_core,
            noise_bits,
            fingerprint_bits,
            seed,
        }
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::new(20, 25, 16, 1, DEFAULT_FINGERPRINT_BITS, 0)
    }
}

pub const SYNTHETIC_GROUPS: [&str; 3] = ["scaffold", "series", "batch"];

/// Generates scaffold blobs.
///
/// Each scaffold core splits into a shared half, drawn from a small common
/// vocabulary of positions (each vocabulary bit is set in about half of the
/// scaffolds), and a specific half drawn from the remaining positions. Every
/// molecule is its scaffold core plus `noise_bits` positions sampled from the
/// common vocabulary, which plays the role of substituent sites.
///
/// Metadata: `scaffold` (the key), `series` (scaffold family, relabelled at
/// random for one molecule in ten) and `batch` (independent of scaffold).
pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(DatasetManifest, Vec<MoleculeRecord>), DatasetError> {
    let f = spec.fingerprint_bits;
    if spec.n_scaffolds == 0 {
        return Err(DatasetError::InvalidSpec("n_scaffolds must be >= 1".into()));
    }
    if spec.molecules_per_scaffold == 0 {
        return Err(DatasetError::InvalidSpec(
            "molecules_per_scaffold must be >= 1".into(),
        ));
    }
    if f == 0 || !f.is_multiple_of(4) {
        return Err(DatasetError::InvalidSpec(format!(
            "F={f} must be a positive multiple of 4"
        )));
    }
    if spec.bits_per_scaffold_core + spec.noise_bits > f {
        return Err(DatasetError::InvalidSpec(format!(
            "core bits {} + noise bits {} exceed F={f}",
            spec.bits_per_scaffold_core, spec.noise_bits
        )));
    }

    let mut rng = rng_from(spec.seed);
    let specific = spec.bits_per_scaffold_core / 2;
    let shared = spec.bits_per_scaffold_core - specific;
    let vocab_len = (2 * shared).max(spec.noise_bits).min(f - specific);

    let mut positions: Vec<usize> = sample(&mut rng, f, f).into_vec();
    let rest = positions.split_off(vocab_len);
    let vocab = positions;

    let n_series = (spec.n_scaffolds / 4).max(2);
    let mut records = Vec::with_capacity(spec.n_scaffolds * spec.molecules_per_scaffold);
    let width = (spec.n_scaffolds * spec.molecules_per_scaffold)
        .to_string()
        .len()
        .max(6);
    let scaffold_width = spec.n_scaffolds.to_string().len().max(4);

    for s in 0..spec.n_scaffolds {
        let mut core = Fingerprint::zeros(f);
        for i in sample(&mut rng, vocab.len(), shared.min(vocab.len())) {
            core.set(vocab[i], true);
        }
        for i in sample(&mut rng, rest.len(), specific.min(rest.len())) {
            core.set(rest[i], true);
        }
        let key = format!("SCF{s:0scaffold_width$}");
        for _ in 0..spec.molecules_per_scaffold {
            let mut fp = core.clone();
            for i in sample(&mut rng, vocab.len(), spec.noise_bits.min(vocab.len())) {
                fp.set(vocab[i], true);
            }
            let series = if rng.random_bool(0.1) {
                rng.random_range(0..n_series)
            } else {
                s * n_series / spec.n_scaffolds
            };
            let batch = rng.random_range(0..4);
            let mol_id = format!("MOL{:0width$}", records.len());
            records.push(MoleculeRecord {
                mol_id,
                fingerprint: fp,
                scaffold: key.clone(),
                metadata: vec![
                    ("scaffold".into(), MetaValue::Categorical(key.clone())),
                    ("series".into(), MetaValue::Categorical(format!("S{series}"))),
                    ("batch".into(), MetaValue::Categorical(format!("B{batch}"))),
                ],
            });
        }
    }

    let manifest = DatasetManifest {
        name: "synthetic".into(),
        fingerprint_bits: f,
        feature_groups: SYNTHETIC_GROUPS
            .iter()
            .map(|g| FeatureGroup::categorical(*g))
            .collect(),
        record_count: records.len(),
    };
    Ok((manifest, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (DatasetManifest, Vec<MoleculeRecord>) {
        generate_synthetic(&SyntheticSpec::new(2, 3, 8, 4, 64, 1)).unwrap()
    }

    #[test]
    fn hex_is_msb_first() {
        let fp = Fingerprint::from_bit_str("10000000");
        assert_eq!(fp.to_hex(), "80");
        let fp = Fingerprint::from_bit_str("00010001");
        assert_eq!(fp.to_hex(), "11");
        assert_eq!(Fingerprint::from_hex("11", 8).unwrap(), fp);
    }

    #[test]
    fn tanimoto_examples() {
        let a = Fingerprint::from_bit_str("1100");
        let b = Fingerprint::from_bit_str("1010");
        assert!((tanimoto_distance(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(tanimoto_distance(&a, &a).unwrap(), 0.0);
        let c = Fingerprint::from_bit_str("0011");
        assert_eq!(tanimoto_distance(&a, &c).unwrap(), 1.0);
        let z = Fingerprint::zeros(4);
        assert_eq!(tanimoto_distance(&z, &z).unwrap(), 0.0);
        assert!(matches!(
            tanimoto_distance(&a, &Fingerprint::zeros(8)),
            Err(DatasetError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn two_row_file_parses() {
        let text = "#fedmol-v1\tF=8\nmol_id\tscaffold\tfp_hex\tmeta:journal\tmeta:year:num\n\
                    m1\tc1ccccc1\t0f\tJMC\t2011\nm2\tNO_SCAFFOLD\ta0\tNA\tNA\n";
        let (manifest, records) = parse_dataset(text, "x").unwrap();
        assert_eq!(manifest.record_count, 2);
        assert_eq!(manifest.feature_groups[1].kind, FeatureKind::Numeric);
        assert_eq!(records[0].meta("year"), Some(&MetaValue::Numeric(2011.0)));
        assert!(records[1].meta("journal").unwrap().is_missing());
        assert!(records[1].fingerprint.get(0) && records[1].fingerprint.get(2));
    }

    #[test]
    fn wrong_hex_length_is_reported_with_line() {
        let hex = "0".repeat(511);
        let text = format!("#fedmol-v1\tF=2048\nmol_id\tscaffold\tfp_hex\nm1\ts\t{hex}\n");
        match parse_dataset(&text, "x") {
            Err(DatasetError::WrongHexLength {
                line: 3,
                expected: 512,
                found: 511,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distinct_parse_errors() {
        let head = "#fedmol-v1\tF=8\nmol_id\tscaffold\tfp_hex\tmeta:g\n";
        assert!(matches!(
            parse_dataset("#fedmol-v2\tF=8\n", "x"),
            Err(DatasetError::MalformedHeader { line: 1, .. })
        ));
        assert!(matches!(
            parse_dataset("#fedmol-v1\tF=8\nid\tscaffold\tfp_hex\n", "x"),
            Err(DatasetError::MalformedHeader { line: 2, .. })
        ));
        assert!(matches!(
            parse_dataset(&format!("{head}a\ts\t00\tx\na\ts\t00\ty\n"), "x"),
            Err(DatasetError::DuplicateMolId { line: 4, .. })
        ));
        assert!(matches!(
            parse_dataset(&format!("{head}a\ts\t00\n"), "x"),
            Err(DatasetError::ColumnCount { line: 3, .. })
        ));
        assert!(matches!(
            parse_dataset(&format!("{head}a\ts\t0G\tx\n"), "x"),
            Err(DatasetError::InvalidHex { line: 3 })
        ));
        assert!(matches!(
            parse_dataset(&format!("{head}a\ts\t0A\tx\n"), "x"),
            Err(DatasetError::InvalidHex { line: 3 })
        ));
    }

    #[test]
    fn synthetic_without_noise_repeats_the_core() {
        let (m, recs) = generate_synthetic(&SyntheticSpec::new(2, 3, 8, 0, 64, 1)).unwrap();
        assert_eq!(m.record_count, 6);
        for chunk in recs.chunks(3) {
            assert!(chunk.iter().all(|r| r.fingerprint == chunk[0].fingerprint));
            assert!(chunk.iter().all(|r| r.scaffold == chunk[0].scaffold));
            assert_eq!(chunk[0].fingerprint.count_ones(), 8);
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        assert_eq!(tiny(), tiny());
        let (_, other) = generate_synthetic(&SyntheticSpec::new(2, 3, 8, 4, 64, 2)).unwrap();
        assert_ne!(tiny().1, other);
    }

    #[test]
    fn synthetic_scaffold_count() {
        let (_, recs) = generate_synthetic(&SyntheticSpec::new(5, 4, 8, 2, 64, 3)).unwrap();
        let keys: HashSet<_> = recs.iter().map(|r| r.scaffold.as_str()).collect();
        assert_eq!(keys.len(), 5);
    }

    #[test]
    fn synthetic_rejects_bad_specs() {
        assert!(generate_synthetic(&SyntheticSpec::new(0, 3, 8, 0, 64, 1)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(2, 3, 60, 8, 64, 1)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(2, 3, 8, 0, 30, 1)).is_err());
    }

    #[test]
    fn shard_names_round_trip() {
        let name = shard_file_name("ames", 3);
        assert_eq!(name, "ames.client3.tsv");
        assert_eq!(dataset_name_from_path(Path::new(&name)), "ames");
        assert_eq!(dataset_name_from_path(Path::new("d.tsv")), "d");
    }

    #[test]
    fn shard_requires_records() {
        assert!(ClientShard::new(0, vec![]).is_err());
    }
}
