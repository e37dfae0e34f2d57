//! Automatic discovery of dialogue act cues.
//!
//! A cue is a word substring (one to three tokens) whose co-occurring
//! dialogue acts have low conditional entropy and enough support:
//! a substring `s` is selected when `H(D|s) < theta1` and `#(s) > theta2`,
//! both strictly. A superstring filter then drops cues subsumed by a
//! contained cue with a better or equal entropy score.
//!
//! Alternative substring sources (an external phrase list, or all n-grams)
//! are provided for comparison experiments.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::corpus::{ngrams_up_to, tokenize, Corpus, Tag};
use crate::{Error, Result};

/// Per-substring occurrence counts. An utterance contributes at most one
/// count per substring, however often the substring repeats inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstringStats {
    pub substring: String,
    /// Number of gold-tagged utterances containing the substring.
    pub count: u32,
    /// Number of containing utterances per gold tag; sums to `count`.
    pub per_tag: BTreeMap<Tag, u32>,
}

/// A selected cue with its support and conditional entropy in bits.
#[derive(Clone, Debug, PartialEq)]
pub struct Cue {
    pub substring: String,
    pub count: u32,
    pub entropy: f64,
}

/// Which substrings the learner may condition on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubstringMode {
    None,
    ExternalList,
    AllNgrams,
    Entropy,
    EntropyFilter,
    EntropyCluster,
    EntropyFilterCluster,
}

impl SubstringMode {
    pub const ALL: [SubstringMode; 7] = [
        SubstringMode::None,
        SubstringMode::ExternalList,
        SubstringMode::AllNgrams,
        SubstringMode::Entropy,
        SubstringMode::EntropyFilter,
        SubstringMode::EntropyCluster,
        SubstringMode::EntropyFilterCluster,
    ];

    /// True for modes that expect cluster substitution on the corpus.
    pub fn uses_clusters(self) -> bool {
        matches!(self, SubstringMode::EntropyCluster | SubstringMode::EntropyFilterCluster)
    }

    pub fn uses_filter(self) -> bool {
        matches!(self, SubstringMode::EntropyFilter | SubstringMode::EntropyFilterCluster)
    }
}

impl fmt::Display for SubstringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SubstringMode::None => "none",
            SubstringMode::ExternalList => "external-list",
            SubstringMode::AllNgrams => "all-ngrams",
            SubstringMode::Entropy => "entropy",
            SubstringMode::EntropyFilter => "entropy+filter",
            SubstringMode::EntropyCluster => "entropy+cluster",
            SubstringMode::EntropyFilterCluster => "entropy+filter+cluster",
        };
        f.write_str(s)
    }
}

impl FromStr for SubstringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<SubstringMode> {
        SubstringMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown substring mode {s:?}")))
    }
}

/// Thresholds and mode for cue selection.
#[derive(Clone, Debug)]
pub struct CueConfig {
    /// Entropy threshold in bits; `None` means "use the marginal tag
    /// entropy of the corpus".
    pub theta1: Option<f64>,
    /// Support threshold; a substring must occur in strictly more
    /// utterances than this.
    pub theta2: u32,
    /// Maximum substring length in tokens (1-3).
    pub max_len: usize,
    pub mode: SubstringMode,
}

impl Default for CueConfig {
    fn default() -> Self {
        CueConfig {
            theta1: None,
            theta2: 6,
            max_len: 3,
            mode: SubstringMode::EntropyFilter,
        }
    }
}

impl CueConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.max_len) {
            return Err(Error::Invalid(format!("max_len must be 1-3, got {}", self.max_len)));
        }
        if let Some(t1) = self.theta1 {
            if !t1.is_finite() || t1 < 0.0 {
                return Err(Error::Invalid(format!("theta1 must be a non-negative number, got {t1}")));
            }
        }
        Ok(())
    }
}

/// An ordered cue inventory. Cues are kept sorted by entropy ascending,
/// count descending, then substring, which is also the TSV file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CueSet {
    cues: Vec<Cue>,
    index: HashSet<String>,
}

impl CueSet {
    pub fn new(mut cues: Vec<Cue>) -> CueSet {
        cues.sort_by(|a, b| {
            a.entropy
                .partial_cmp(&b.entropy)
                .expect("cue entropy is never NaN")
                .then(b.count.cmp(&a.count))
                .then(a.substring.cmp(&b.substring))
        });
        cues.dedup_by(|a, b| a.substring == b.substring);
        let index = cues.iter().map(|c| c.substring.clone()).collect();
        CueSet { cues, index }
    }

    pub fn empty() -> CueSet {
        CueSet::default()
    }

    pub fn cues(&self) -> &[Cue] {
        &self.cues
    }

    pub fn contains(&self, substring: &str) -> bool {
        self.index.contains(substring)
    }

    pub fn len(&self) -> usize {
        self.cues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    /// TSV rows `substring<TAB>count<TAB>entropy-bits`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for cue in &self.cues {
            out.push_str(&format!("{}\t{}\t{}\n", cue.substring, cue.count, cue.entropy));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<CueSet> {
        let mut cues = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (sub, count, entropy) = match (fields.next(), fields.next(), fields.next()) {
                (Some(s), Some(c), Some(e)) => (s, c, e),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: "expected `substring<TAB>count<TAB>entropy`".into(),
                    })
                }
            };
            let count: u32 = count.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad count {count:?}"),
            })?;
            let entropy: f64 = entropy.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad entropy {entropy:?}"),
            })?;
            cues.push(Cue { substring: sub.to_string(), count, entropy });
        }
        Ok(CueSet::new(cues))
    }

    /// Stable content hash of the canonical TSV form.
    pub fn content_hash(&self) -> String {
        crate::fnv1a_hex(self.to_tsv().as_bytes())
    }
}

/// Counts every distinct token n-gram of length `1..=max_len` across all
/// gold-tagged utterances, with presence semantics.
pub fn enumerate_substrings(corpus: &Corpus, max_len: usize) -> BTreeMap<String, SubstringStats> {
    let mut stats: BTreeMap<String, SubstringStats> = BTreeMap::new();
    for (_, _, utt) in corpus.iter_utterances() {
        if utt.gold_tag.is_none() {
            continue;
        }
        for gram in ngrams_up_to(&utt.tokens, max_len) {
            let entry = stats.entry(gram.clone()).or_insert_with(|| SubstringStats {
                substring: gram,
                count: 0,
                per_tag: BTreeMap::new(),
            });
            entry.count += 1;
            *entry.per_tag.entry(utt.gold_tag.clone()).or_insert(0) += 1;
        }
    }
    stats
}

/// Shannon entropy, in bits, of the dialogue act distribution conditioned
/// on the substring: `-sum P(d|s) log2 P(d|s)` with `P(d|s) = #(d&s)/#(s)`.
pub fn conditional_entropy(stats: &SubstringStats) -> Result<f64> {
    if stats.count == 0 {
        return Err(Error::Invalid(format!(
            "conditional entropy of {:?} is undefined: zero occurrences",
            stats.substring
        )));
    }
    let n = f64::from(stats.count);
    let mut h = 0.0;
    for &c in stats.per_tag.values() {
        if c > 0 {
            let p = f64::from(c) / n;
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Shannon entropy of the gold tag distribution over the whole corpus;
/// the default value of `theta1`.
pub fn tag_marginal_entropy(corpus: &Corpus) -> Result<f64> {
    let mut counts: BTreeMap<&Tag, u32> = BTreeMap::new();
    for (_, _, utt) in corpus.iter_utterances() {
        if !utt.gold_tag.is_none() {
            *counts.entry(&utt.gold_tag).or_insert(0) += 1;
        }
    }
    let total: u32 = counts.values().sum();
    if total == 0 {
        return Err(Error::Invalid("marginal tag entropy of an untagged corpus is undefined".into()));
    }
    let n = f64::from(total);
    let mut h = 0.0;
    for &c in counts.values() {
        let p = f64::from(c) / n;
        h -= p * p.log2();
    }
    Ok(h)
}

/// The effective entropy threshold for a config: the explicit `theta1` or
/// the corpus marginal tag entropy.
pub fn resolve_theta1(corpus: &Corpus, config: &CueConfig) -> Result<f64> {
    match config.theta1 {
        Some(t1) => Ok(t1),
        None => tag_marginal_entropy(corpus),
    }
}

/// Selects exactly the substrings with `H(D|s) < theta1` and `#(s) > theta2`,
/// both inequalities strict.
pub fn select_cues(corpus: &Corpus, config: &CueConfig) -> Result<CueSet> {
    config.validate()?;
    let stats = enumerate_substrings(corpus, config.max_len);
    if stats.is_empty() {
        return Ok(CueSet::empty());
    }
    let theta1 = resolve_theta1(corpus, config)?;
    let mut cues = Vec::new();
    for s in stats.values() {
        if s.count <= config.theta2 {
            continue;
        }
        let entropy = conditional_entropy(s)?;
        if entropy < theta1 {
            cues.push(Cue { substring: s.substring.clone(), count: s.count, entropy });
        }
    }
    Ok(CueSet::new(cues))
}

fn is_token_substring(needle: &str, hay: &str) -> bool {
    let n: Vec<&str> = needle.split(' ').collect();
    let h: Vec<&str> = hay.split(' ').collect();
    n.len() < h.len() && h.windows(n.len()).any(|w| w == n.as_slice())
}

/// Drops every cue that contains another cue (from the original set) as a
/// contiguous token substring with a better or equal entropy score.
///
/// Removal is decided against the input set, so the pass is
/// order-independent and idempotent: a removed substring still disqualifies
/// its superstrings.
pub fn filter_superstrings(cues: &CueSet) -> CueSet {
    let kept = cues
        .cues()
        .iter()
        .filter(|c| {
            c.entropy.is_infinite()
                || !cues.cues().iter().any(|shorter| {
                    shorter.entropy.is_finite()
                        && shorter.entropy <= c.entropy
                        && is_token_substring(&shorter.substring, &c.substring)
                })
        })
        .cloned()
        .collect();
    CueSet::new(kept)
}

/// Parses an external cue-phrase list: one phrase per line, normalized by
/// the corpus tokenizer. Phrases longer than three tokens are dropped,
/// since rule conditions only test substrings of one to three tokens.
pub fn parse_cue_list(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut phrases = Vec::new();
    for line in text.lines() {
        let (tokens, _) = tokenize(line);
        if tokens.is_empty() || tokens.len() > 3 {
            continue;
        }
        let phrase = tokens.join(" ");
        if seen.insert(phrase.clone()) {
            phrases.push(phrase);
        }
    }
    phrases
}

/// Produces the cue inventory for a substring mode.
///
/// Cluster variants behave like their base mode here; cluster substitution
/// is applied to the corpus upstream, at load time.
pub fn substring_source(
    corpus: &Corpus,
    config: &CueConfig,
    external: Option<&[String]>,
) -> Result<CueSet> {
    config.validate()?;
    match config.mode {
        SubstringMode::None => Ok(CueSet::empty()),
        SubstringMode::AllNgrams => {
            let stats = enumerate_substrings(corpus, config.max_len);
            let cues = stats
                .values()
                .map(|s| {
                    Ok(Cue {
                        substring: s.substring.clone(),
                        count: s.count,
                        entropy: conditional_entropy(s)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CueSet::new(cues))
        }
        SubstringMode::ExternalList => {
            let phrases = external.ok_or_else(|| {
                Error::Invalid("external-list mode requires a cue-phrase list".into())
            })?;
            let stats = enumerate_substrings(corpus, 3);
            let cues = phrases
                .iter()
                .map(|p| match stats.get(p) {
                    Some(s) => Ok(Cue {
                        substring: p.clone(),
                        count: s.count,
                        entropy: conditional_entropy(s)?,
                    }),
                    None => Ok(Cue { substring: p.clone(), count: 0, entropy: f64::INFINITY }),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CueSet::new(cues))
        }
        SubstringMode::Entropy | SubstringMode::EntropyCluster => select_cues(corpus, config),
        SubstringMode::EntropyFilter | SubstringMode::EntropyFilterCluster => {
            Ok(filter_superstrings(&select_cues(corpus, config)?))
        }
    }
}
