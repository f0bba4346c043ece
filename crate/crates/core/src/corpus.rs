//! Test-set ingestion, domain statistics and domain-balanced sampling.
//!
//! Test set TSV, one segment per line:
//!
//! ```text
//! doc_id <TAB> seg_id <TAB> domain <TAB> position <TAB> source <TAB> reference
//! ```
//!
//! System output TSV: `seg_id <TAB> hypothesis`. Both are UTF-8 with LF line
//! endings; fields cannot contain tabs or newlines.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::labeled_rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("{file}: not valid UTF-8 (byte {valid_up_to})")]
    InvalidUtf8 { file: String, valid_up_to: usize },
    #[error("{file}:{line}: expected {expected} tab-separated columns, found {found}")]
    MalformedRow { file: String, line: usize, expected: usize, found: usize },
    #[error("{file}:{line}: column {column}: {message}")]
    BadField { file: String, line: usize, column: usize, message: String },
    #[error("{file}:{line}: duplicate seg_id {seg_id:?}")]
    DuplicateSegId { file: String, line: usize, seg_id: String },
    #[error("document {doc_id:?}: positions are not contiguous from 0")]
    NonContiguousPositions { doc_id: String },
    #[error("document {doc_id:?}: mixes domains {first:?} and {second:?}")]
    InconsistentDomain { doc_id: String, first: String, second: String },
    #[error("system {system:?}:{line}: seg_id {seg_id:?} is not in the test set")]
    UnknownSegment { system: String, line: usize, seg_id: String },
    #[error("system {system:?}:{line}: duplicate output for seg_id {seg_id:?}")]
    DuplicateOutput { system: String, line: usize, seg_id: String },
    #[error("system {system:?} has no output for seg_id {seg_id:?}")]
    CoverageGap { system: String, seg_id: String },
    #[error("test set has no segments")]
    Empty,
    #[error("no system outputs supplied")]
    NoSystems,
    #[error("target {target} exceeds the {available} segments available")]
    TargetTooLarge { target: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub seg_id: String,
    pub doc_id: String,
    pub domain: String,
    pub position: usize,
    pub source: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub system_id: String,
    pub seg_id: String,
    pub hypothesis: String,
}

/// A document: a contiguous run of `TestSet::segments`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document<'a> {
    pub doc_id: &'a str,
    pub domain: &'a str,
    pub segments: &'a [Segment],
}

/// Segments grouped by document (documents in first-appearance order,
/// segments by position) plus every system's hypothesis for every segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSet {
    segments: Vec<Segment>,
    /// system_id -> seg_id -> hypothesis
    outputs: BTreeMap<String, BTreeMap<String, String>>,
}

fn decode<'a>(file: &str, bytes: &'a [u8]) -> Result<&'a str, CorpusError> {
    std::str::from_utf8(bytes).map_err(|e| CorpusError::InvalidUtf8 {
        file: file.to_string(),
        valid_up_to: e.valid_up_to(),
    })
}

fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses a test set and its system outputs.
///
/// `outputs` maps system id to the bytes of that system's output TSV.
pub fn parse_testset(test_set: &[u8], outputs: &BTreeMap<String, Vec<u8>>) -> Result<TestSet, CorpusError> {
    const FILE: &str = "testset";
    let text = decode(FILE, test_set)?;
    let mut segments = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, row) in rows(text) {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 6 {
            return Err(CorpusError::MalformedRow { file: FILE.into(), line, expected: 6, found: cols.len() });
        }
        let bad = |column: usize, message: &str| CorpusError::BadField {
            file: FILE.into(),
            line,
            column,
            message: message.into(),
        };
        for (i, c) in cols[..3].iter().enumerate() {
            if c.is_empty() {
                return Err(bad(i + 1, "empty identifier"));
            }
        }
        let position = cols[3].parse::<usize>().map_err(|_| bad(4, "position is not a non-negative integer"))?;
        if cols[5].is_empty() {
            return Err(bad(6, "reference is empty"));
        }
        if !seen.insert(cols[1].to_string()) {
            return Err(CorpusError::DuplicateSegId { file: FILE.into(), line, seg_id: cols[1].into() });
        }
        segments.push(Segment {
            doc_id: cols[0].into(),
            seg_id: cols[1].into(),
            domain: cols[2].into(),
            position,
            source: cols[4].into(),
            reference: cols[5].into(),
        });
    }
    if segments.is_empty() {
        return Err(CorpusError::Empty);
    }
    let segments = group_documents(segments)?;

    if outputs.is_empty() {
        return Err(CorpusError::NoSystems);
    }
    let mut parsed = BTreeMap::new();
    for (system, bytes) in outputs {
        let text = decode(system, bytes)?;
        let mut hyps = BTreeMap::new();
        for (line, row) in rows(text) {
            let cols: Vec<&str> = row.split('\t').collect();
            if cols.len() != 2 {
                return Err(CorpusError::MalformedRow { file: system.clone(), line, expected: 2, found: cols.len() });
            }
            if !seen.contains(cols[0]) {
                return Err(CorpusError::UnknownSegment { system: system.clone(), line, seg_id: cols[0].into() });
            }
            if hyps.insert(cols[0].to_string(), cols[1].to_string()).is_some() {
                return Err(CorpusError::DuplicateOutput { system: system.clone(), line, seg_id: cols[0].into() });
            }
        }
        if let Some(missing) = segments.iter().find(|s| !hyps.contains_key(&s.seg_id)) {
            return Err(CorpusError::CoverageGap { system: system.clone(), seg_id: missing.seg_id.clone() });
        }
        parsed.insert(system.clone(), hyps);
    }
    Ok(TestSet { segments, outputs: parsed })
}

fn group_documents(segments: Vec<Segment>) -> Result<Vec<Segment>, CorpusError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_doc: HashMap<String, Vec<Segment>> = HashMap::new();
    for seg in segments {
        if !by_doc.contains_key(&seg.doc_id) {
            order.push(seg.doc_id.clone());
        }
        by_doc.entry(seg.doc_id.clone()).or_default().push(seg);
    }
    let mut out = Vec::new();
    for doc_id in order {
        let mut segs = by_doc.remove(&doc_id).unwrap_or_default();
        segs.sort_by_key(|s| s.position);
        if segs.iter().enumerate().any(|(i, s)| s.position != i) {
            return Err(CorpusError::NonContiguousPositions { doc_id });
        }
        if let Some(other) = segs.iter().find(|s| s.domain != segs[0].domain) {
            return Err(CorpusError::InconsistentDomain {
                doc_id,
                first: segs[0].domain.clone(),
                second: other.domain.clone(),
            });
        }
        out.extend(segs);
    }
    Ok(out)
}

impl TestSet {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn systems(&self) -> impl Iterator<Item = &str> {
        self.outputs.keys().map(String::as_str)
    }

    pub fn num_systems(&self) -> usize {
        self.outputs.len()
    }

    pub fn hypothesis(&self, system_id: &str, seg_id: &str) -> Option<&str> {
        self.outputs.get(system_id)?.get(seg_id).map(String::as_str)
    }

    pub fn segment(&self, seg_id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.seg_id == seg_id)
    }

    pub fn outputs(&self) -> impl Iterator<Item = SystemOutput> + '_ {
        self.outputs.iter().flat_map(|(system, hyps)| {
            self.segments.iter().map(move |s| SystemOutput {
                system_id: system.clone(),
                seg_id: s.seg_id.clone(),
                hypothesis: hyps[&s.seg_id].clone(),
            })
        })
    }

    /// Documents in corpus order.
    pub fn documents(&self) -> Vec<Document<'_>> {
        let mut docs = Vec::new();
        let mut start = 0;
        while start < self.segments.len() {
            let doc_id = &self.segments[start].doc_id;
            let mut end = start + 1;
            while end < self.segments.len() && &self.segments[end].doc_id == doc_id {
                end += 1;
            }
            docs.push(Document {
                doc_id,
                domain: &self.segments[start].domain,
                segments: &self.segments[start..end],
            });
            start = end;
        }
        docs
    }

    /// Test set TSV in the ingestion layout.
    pub fn to_testset_tsv(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                s.doc_id, s.seg_id, s.domain, s.position, s.source, s.reference
            ));
        }
        out
    }

    /// System output TSV for one system.
    pub fn to_output_tsv(&self, system_id: &str) -> Option<String> {
        let hyps = self.outputs.get(system_id)?;
        let mut out = String::new();
        for s in &self.segments {
            out.push_str(&format!("{}\t{}\n", s.seg_id, hyps[&s.seg_id]));
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStat {
    pub domain: String,
    pub segment_count: usize,
    pub document_count: usize,
    pub avg_doc_length: f64,
}

impl DomainStat {
    /// Average document length as printed in reports (one decimal).
    pub fn avg_doc_length_display(&self) -> String {
        format!("{:.1}", self.avg_doc_length)
    }
}

/// One row per domain, sorted by domain name.
pub fn domain_stats(testset: &TestSet) -> Vec<DomainStat> {
    let mut acc: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for doc in testset.documents() {
        let e = acc.entry(doc.domain).or_default();
        e.0 += doc.segments.len();
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(domain, (segs, docs))| DomainStat {
            domain: domain.to_string(),
            segment_count: segs,
            document_count: docs,
            avg_doc_length: segs as f64 / docs as f64,
        })
        .collect()
}

pub fn domain_stats_csv(stats: &[DomainStat]) -> String {
    let mut out = String::from("domain,segments,documents,avg_doc_length\n");
    for s in stats {
        out.push_str(&format!("{},{},{},{}\n", s.domain, s.segment_count, s.document_count, s.avg_doc_length_display()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSelection {
    pub domain: String,
    pub quota: usize,
    pub segments: usize,
    pub documents: usize,
}

/// Manifest of a domain-balanced document sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledSet {
    pub v: u32,
    pub seed: u64,
    pub per_system_target: usize,
    /// Selected documents, in corpus order.
    pub selected_doc_ids: Vec<String>,
    pub per_domain: Vec<DomainSelection>,
}

impl SampledSet {
    /// Selected segments in corpus order.
    pub fn segments<'a>(&'a self, testset: &'a TestSet) -> impl Iterator<Item = &'a Segment> + 'a {
        let chosen: BTreeSet<&str> = self.selected_doc_ids.iter().map(String::as_str).collect();
        testset.segments().iter().filter(move |s| chosen.contains(s.doc_id.as_str()))
    }

    pub fn total_segments(&self) -> usize {
        self.per_domain.iter().map(|d| d.segments).sum()
    }
}

/// Per-domain segment quotas. Each domain is asked for `ceil(remaining /
/// domains_left)`; a domain too small to meet its quota gives up everything
/// it has and the shortfall is spread over the larger domains.
fn domain_quotas(sizes: &BTreeMap<&str, usize>, target: usize) -> BTreeMap<String, usize> {
    let mut quotas = BTreeMap::new();
    let mut remaining: Vec<(&str, usize)> = sizes.iter().map(|(d, n)| (*d, *n)).collect();
    let mut left = target;
    loop {
        if remaining.is_empty() {
            break;
        }
        let share = left.div_ceil(remaining.len());
        let (small, large): (Vec<_>, Vec<_>) = remaining.iter().partition(|(_, n)| *n <= share);
        if small.is_empty() {
            for (d, _) in &remaining {
                quotas.insert(d.to_string(), share);
            }
            break;
        }
        for (d, n) in &small {
            quotas.insert(d.to_string(), *n);
            left = left.saturating_sub(*n);
        }
        remaining = large;
    }
    quotas
}

/// Draws whole documents uniformly at random (without replacement) within
/// each domain until that domain's segment count reaches its quota of about
/// `target / domains`. Selected documents are listed in corpus order.
pub fn sample_balanced(testset: &TestSet, per_system_target: usize, seed: u64) -> Result<SampledSet, CorpusError> {
    let available = testset.segments().len();
    if per_system_target > available {
        return Err(CorpusError::TargetTooLarge { target: per_system_target, available });
    }
    let docs = testset.documents();
    let mut by_domain: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        by_domain.entry(d.domain).or_default().push(i);
    }
    let sizes: BTreeMap<&str, usize> = by_domain
        .iter()
        .map(|(d, idx)| (*d, idx.iter().map(|&i| docs[i].segments.len()).sum()))
        .collect();
    let quotas = domain_quotas(&sizes, per_system_target);

    let mut chosen = vec![false; docs.len()];
    let mut per_domain = Vec::new();
    for (domain, doc_idx) in &by_domain {
        let quota = quotas[*domain];
        let mut order = doc_idx.clone();
        let mut rng = labeled_rng(seed, &format!("sample/{domain}"));
        order.shuffle(&mut rng);
        let (mut segs, mut ndocs) = (0, 0);
        for i in order {
            if segs >= quota {
                break;
            }
            chosen[i] = true;
            segs += docs[i].segments.len();
            ndocs += 1;
        }
        per_domain.push(DomainSelection { domain: domain.to_string(), quota, segments: segs, documents: ndocs });
    }
    let selected_doc_ids = docs
        .iter()
        .zip(&chosen)
        .filter(|(_, c)| **c)
        .map(|(d, _)| d.doc_id.to_string())
        .collect();
    Ok(SampledSet { v: 1, seed, per_system_target, selected_doc_ids, per_domain })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str = "news-doc1\tnews-doc1-0\tnews\t0\tQuelle eins\tSource one\n\
news-doc1\tnews-doc1-1\tnews\t1\tQuelle zwei\tSource two\n\
conv-doc1\tconv-doc1-0\tconversation\t0\tHallo\tHello there\n\
conv-doc1\tconv-doc1-1\tconversation\t1\tTschuess\tGoodbye now\n";

    fn small_outputs(skip: Option<(&str, &str)>) -> BTreeMap<String, Vec<u8>> {
        let segs = ["news-doc1-0", "news-doc1-1", "conv-doc1-0", "conv-doc1-1"];
        ["A", "B"]
            .iter()
            .map(|sys| {
                let body: String = segs
                    .iter()
                    .filter(|s| skip != Some((sys, **s)))
                    .map(|s| format!("{s}\thyp of {s} by {sys}\n"))
                    .collect();
                (sys.to_string(), body.into_bytes())
            })
            .collect()
    }

    #[test]
    fn minimal_well_formed_input() {
        let ts = parse_testset(SMALL.as_bytes(), &small_outputs(None)).unwrap();
        assert_eq!(ts.segments().len(), 4);
        assert_eq!(ts.num_systems(), 2);
        assert_eq!(ts.documents().len(), 2);
        assert_eq!(ts.hypothesis("B", "conv-doc1-1"), Some("hyp of conv-doc1-1 by B"));
    }

    #[test]
    fn coverage_gap_names_system_and_segment() {
        let err = parse_testset(SMALL.as_bytes(), &small_outputs(Some(("B", "news-doc1-1")))).unwrap_err();
        assert_eq!(err, CorpusError::CoverageGap { system: "B".into(), seg_id: "news-doc1-1".into() });
    }

    #[test]
    fn malformed_row_reports_line() {
        let bad = format!("{SMALL}news-doc2\tnews-doc2-0\tnews\t0\tonly five cols\n");
        match parse_testset(bad.as_bytes(), &small_outputs(None)).unwrap_err() {
            CorpusError::MalformedRow { line, found, .. } => {
                assert_eq!(line, 5);
                assert_eq!(found, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_seg_id_rejected() {
        let dup = format!("{SMALL}news-doc9\tnews-doc1-0\tnews\t0\tx\ty\n");
        assert!(matches!(
            parse_testset(dup.as_bytes(), &small_outputs(None)),
            Err(CorpusError::DuplicateSegId { line: 5, .. })
        ));
    }

    #[test]
    fn gaps_in_positions_rejected() {
        let gap = "d\ts0\tnews\t0\ta\tb\nd\ts2\tnews\t2\ta\tb\n";
        let mut outs = BTreeMap::new();
        outs.insert("A".to_string(), b"s0\tx\ns2\ty\n".to_vec());
        assert!(matches!(parse_testset(gap.as_bytes(), &outs), Err(CorpusError::NonContiguousPositions { .. })));
    }

    #[test]
    fn bad_position_and_empty_reference() {
        let mut outs = BTreeMap::new();
        outs.insert("A".to_string(), b"s0\tx\n".to_vec());
        assert!(matches!(
            parse_testset(b"d\ts0\tnews\tzero\ta\tb\n", &outs),
            Err(CorpusError::BadField { line: 1, column: 4, .. })
        ));
        assert!(matches!(
            parse_testset(b"d\ts0\tnews\t0\ta\t\n", &outs),
            Err(CorpusError::BadField { line: 1, column: 6, .. })
        ));
    }

    #[test]
    fn unknown_and_duplicate_outputs() {
        let mut outs = small_outputs(None);
        outs.get_mut("A").unwrap().extend_from_slice(b"ghost\tboo\n");
        assert!(matches!(parse_testset(SMALL.as_bytes(), &outs), Err(CorpusError::UnknownSegment { .. })));
        let mut outs = small_outputs(None);
        outs.get_mut("A").unwrap().extend_from_slice(b"news-doc1-0\tagain\n");
        assert!(matches!(parse_testset(SMALL.as_bytes(), &outs), Err(CorpusError::DuplicateOutput { .. })));
    }

    #[test]
    fn invalid_utf8_reported() {
        let bytes = vec![b'd', b'\t', 0xff, 0xfe];
        assert!(matches!(parse_testset(&bytes, &small_outputs(None)), Err(CorpusError::InvalidUtf8 { .. })));
    }

    /// Builds a corpus from per-domain lists of document lengths.
    pub(crate) fn corpus(domains: &[(&str, Vec<usize>)], systems: &[&str]) -> TestSet {
        let mut tsv = String::new();
        let mut segs = Vec::new();
        for (domain, lens) in domains {
            for (d, &len) in lens.iter().enumerate() {
                for p in 0..len {
                    let seg = format!("{domain}-{d}-{p}");
                    tsv.push_str(&format!("{domain}-{d}\t{seg}\t{domain}\t{p}\tquelle {p}\tref words for {seg}\n"));
                    segs.push(seg);
                }
            }
        }
        let outputs = systems
            .iter()
            .map(|sys| {
                let body: String = segs.iter().map(|s| format!("{s}\tthe {sys} output for {s} here\n")).collect();
                (sys.to_string(), body.into_bytes())
            })
            .collect();
        parse_testset(tsv.as_bytes(), &outputs).unwrap()
    }

    /// Splits `total` segments into `docs` documents whose lengths differ by at most one.
    fn even_docs(total: usize, docs: usize) -> Vec<usize> {
        (0..docs).map(|i| total / docs + usize::from(i < total % docs)).collect()
    }

    #[test]
    fn single_document_stats() {
        let ts = corpus(&[("news", vec![7])], &["A"]);
        let stats = domain_stats(&ts);
        assert_eq!(stats.len(), 1);
        assert_eq!((stats[0].segment_count, stats[0].avg_doc_length_display().as_str()), (7, "7.0"));
    }

    #[test]
    fn symmetric_domains() {
        let ts = corpus(&[("a", vec![5, 5]), ("b", vec![5, 5])], &["A"]);
        for s in domain_stats(&ts) {
            assert_eq!((s.segment_count, s.avg_doc_length), (10, 5.0));
        }
    }

    #[test]
    fn wmt22_domain_table_shape() {
        // segment counts per domain; document counts chosen as the integers
        // closest to segments / printed average
        let ts = corpus(
            &[
                ("conversation", even_docs(462, 68)),
                ("ecommerce", even_docs(501, 27)),
                ("news", even_docs(506, 35)),
                ("social", even_docs(515, 33)),
            ],
            &["A", "B"],
        );
        let stats = domain_stats(&ts);
        let got: Vec<(&str, usize, String)> = stats
            .iter()
            .map(|s| (s.domain.as_str(), s.segment_count, s.avg_doc_length_display()))
            .collect();
        assert_eq!(
            got,
            vec![
                ("conversation", 462, "6.8".to_string()),
                // 501 / 27 = 18.56; no whole number of documents gives 18.5
                ("ecommerce", 501, "18.6".to_string()),
                ("news", 506, "14.5".to_string()),
                ("social", 515, "15.6".to_string()),
            ]
        );
    }

    #[test]
    fn saturated_target_takes_whole_corpus() {
        let ts = corpus(&[("a", vec![3, 4, 2]), ("b", vec![10, 1]), ("c", vec![6])], &["A"]);
        let s = sample_balanced(&ts, ts.segments().len(), 5).unwrap();
        let all: Vec<String> = ts.documents().iter().map(|d| d.doc_id.to_string()).collect();
        assert_eq!(s.selected_doc_ids, all);
    }

    #[test]
    fn target_too_large() {
        let ts = corpus(&[("a", vec![3])], &["A"]);
        assert_eq!(sample_balanced(&ts, 4, 0), Err(CorpusError::TargetTooLarge { target: 4, available: 3 }));
    }

    #[test]
    fn sampling_is_deterministic() {
        let ts = corpus(&[("a", even_docs(200, 30)), ("b", even_docs(150, 9))], &["A"]);
        let one = serde_json::to_vec(&sample_balanced(&ts, 120, 42).unwrap()).unwrap();
        let two = serde_json::to_vec(&sample_balanced(&ts, 120, 42).unwrap()).unwrap();
        assert_eq!(one, two);
        let other = serde_json::to_vec(&sample_balanced(&ts, 120, 43).unwrap()).unwrap();
        assert_ne!(one, other);
    }

    #[test]
    fn wmt_scale_sample_of_450() {
        let ts = corpus(
            &[
                ("conversation", even_docs(462, 68)),
                ("ecommerce", even_docs(501, 27)),
                ("news", even_docs(506, 35)),
                ("social", even_docs(515, 33)),
            ],
            &["A"],
        );
        let s = sample_balanced(&ts, 450, 0).unwrap();
        for d in &s.per_domain {
            assert_eq!(d.quota, 113);
            let max_len = ts.documents().iter().filter(|x| x.domain == d.domain).map(|x| x.segments.len()).max().unwrap();
            assert!(d.segments >= 113 && d.segments < 113 + max_len, "{d:?}");
        }
        // frozen from seed 0
        let counts: Vec<usize> = s.per_domain.iter().map(|d| d.segments).collect();
        assert_eq!(counts, vec![117, 131, 117, 125]);
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Vec<usize>>> {
        prop::collection::vec(prop::collection::vec(1usize..12, 1..15), 1..5)
    }

    proptest! {
        #[test]
        fn sampled_documents_are_whole_and_ordered(domains in arb_corpus(), frac in 0.0f64..=1.0, seed: u64) {
            let named: Vec<(String, Vec<usize>)> = domains.into_iter().enumerate().map(|(i, d)| (format!("d{i}"), d)).collect();
            let refs: Vec<(&str, Vec<usize>)> = named.iter().map(|(n, d)| (n.as_str(), d.clone())).collect();
            let ts = corpus(&refs, &["A"]);
            let target = (ts.segments().len() as f64 * frac) as usize;
            let s = sample_balanced(&ts, target, seed).unwrap();
            let picked: Vec<&Segment> = s.segments(&ts).collect();
            // whole documents, contiguous, position-ordered
            for doc in &s.selected_doc_ids {
                let idx: Vec<usize> = picked.iter().enumerate().filter(|(_, x)| &x.doc_id == doc).map(|(i, _)| i).collect();
                let doc_len = ts.documents().iter().find(|d| d.doc_id == doc).unwrap().segments.len();
                prop_assert_eq!(idx.len(), doc_len);
                for w in idx.windows(2) {
                    prop_assert_eq!(w[1], w[0] + 1);
                }
                for (k, &i) in idx.iter().enumerate() {
                    prop_assert_eq!(picked[i].position, k);
                }
            }
            prop_assert_eq!(s.total_segments(), picked.len());
        }

        #[test]
        fn per_domain_counts_near_equal_share(domains in prop::collection::vec(prop::collection::vec(1usize..12, 12..25), 1..5), t in 0usize..60, seed: u64) {
            // every domain holds at least 12 documents, so it can always cover its share
            let named: Vec<(String, Vec<usize>)> = domains.into_iter().enumerate().map(|(i, d)| (format!("d{i}"), d)).collect();
            let refs: Vec<(&str, Vec<usize>)> = named.iter().map(|(n, d)| (n.as_str(), d.clone())).collect();
            let ts = corpus(&refs, &["A"]);
            let num = refs.len();
            let min_domain = refs.iter().map(|(_, d)| d.iter().sum::<usize>()).min().unwrap();
            let target = (t * num).min(num * (min_domain.saturating_sub(11)));
            let s = sample_balanced(&ts, target, seed).unwrap();
            for d in &s.per_domain {
                let max_len = *refs.iter().find(|(n, _)| *n == d.domain).unwrap().1.iter().max().unwrap();
                let share = target as f64 / num as f64;
                prop_assert!((d.segments as f64 - share).abs() <= max_len as f64, "{:?} share {}", d, share);
            }
        }

        #[test]
        fn tsv_round_trip(rows in prop::collection::vec(("[a-z]{1,4}", "[^\t\n\r]{0,12}", "[^\t\n\r]{1,12}"), 1..20)) {
            let mut tsv = String::new();
            let mut outs = String::new();
            let mut pos: BTreeMap<String, usize> = BTreeMap::new();
            for (i, (doc, src, reference)) in rows.iter().enumerate() {
                let p = pos.entry(doc.clone()).or_default();
                tsv.push_str(&format!("{doc}\ts{i}\tdom-{doc}\t{p}\t{src}\t{reference}\n"));
                outs.push_str(&format!("s{i}\th{i} {src}\n"));
                *p += 1;
            }
            let mut outputs = BTreeMap::new();
            outputs.insert("sys".to_string(), outs.into_bytes());
            let ts = parse_testset(tsv.as_bytes(), &outputs).unwrap();
            let mut again = BTreeMap::new();
            again.insert("sys".to_string(), ts.to_output_tsv("sys").unwrap().into_bytes());
            let ts2 = parse_testset(ts.to_testset_tsv().as_bytes(), &again).unwrap();
            prop_assert_eq!(ts, ts2);
        }
    }
}
