//! Tagged dialogue corpora: parsing, tokenization, semantic-cluster
//! substitution, and per-utterance contextual features.
//!
//! A corpus file is line-oriented UTF-8:
//!
//! ```text
//! #tags: SUGGEST REJECT
//! #dialogue: d01
//! A<TAB>SUGGEST<TAB>how about monday
//! B<TAB>REJECT<TAB>no
//! ```
//!
//! `?` in the tag column means "untagged". Blank lines and lines starting
//! with `##` are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Punctuation symbols tracked as utterance features. Any other symbol in
/// this general Unicode class stays part of its token.
pub const PUNCTUATION_ALPHABET: [char; 7] = ['.', ',', '?', '!', ';', ':', '-'];

/// A dialogue act label, or the reserved `NONE` sentinel for "untagged".
///
/// `NONE` is never a member of a corpus tag set; it renders as `?`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag(Option<String>);

impl Tag {
    /// The "untagged / before dialogue start" sentinel.
    pub const NONE: Tag = Tag(None);

    /// Builds a tag from a label: non-empty, no whitespace, not the
    /// reserved `?`.
    pub fn new(label: &str) -> Result<Tag> {
        if label.is_empty() {
            return Err(Error::Invalid("tag label must be non-empty".into()));
        }
        if label.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!(
                "tag label {label:?} must not contain whitespace"
            )));
        }
        if label == "?" {
            return Err(Error::Invalid("tag label `?` is reserved for NONE".into()));
        }
        Ok(Tag(Some(label.to_string())))
    }

    pub fn is_none(&self) -> bool {
        self.0.is_none()
    }

    pub fn label(&self) -> Option<&str> {
        self.0.as_deref()
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Some(label) => f.write_str(label),
            None => f.write_str("?"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Tag> {
        if s == "?" {
            Ok(Tag::NONE)
        } else {
            Tag::new(s)
        }
    }
}

/// One utterance: speaker, normalized tokens, punctuation features, and a
/// gold/working tag pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub speaker: String,
    pub tokens: Vec<String>,
    pub punctuation: BTreeSet<char>,
    pub gold_tag: Tag,
    pub working_tag: Tag,
    pub index_in_dialogue: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

/// An ordered set of dialogues plus the known tag inventory.
///
/// Immutable after load except for `working_tag` fields, which belong to a
/// single trainer or tagger at a time.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub tag_set: BTreeSet<Tag>,
}

impl Corpus {
    pub fn utterance_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.utterances.len()).sum()
    }

    /// Iterates utterances in flat order as `(dialogue_idx, utterance_idx, utterance)`.
    pub fn iter_utterances(&self) -> impl Iterator<Item = (usize, usize, &Utterance)> {
        self.dialogues
            .iter()
            .enumerate()
            .flat_map(|(d, dlg)| dlg.utterances.iter().enumerate().map(move |(u, utt)| (d, u, utt)))
    }

    pub fn reset_working_tags(&mut self) {
        for dlg in &mut self.dialogues {
            for utt in &mut dlg.utterances {
                utt.working_tag = Tag::NONE;
            }
        }
    }
}

/// Which tag column [`serialize_corpus`] writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TagColumn {
    Gold,
    Working,
}

/// Maps surface words onto semantic cluster labels such as `$weekday$`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClusterMap {
    clusters: BTreeMap<String, BTreeSet<String>>,
    word_to_label: HashMap<String, String>,
}

impl ClusterMap {
    /// Builds a map, checking that labels are `$...$`-delimited, word sets
    /// are pairwise disjoint, and no word collides with a label.
    pub fn new(clusters: BTreeMap<String, BTreeSet<String>>) -> Result<ClusterMap> {
        let mut word_to_label = HashMap::new();
        for (label, words) in &clusters {
            if label.len() < 3 || !label.starts_with('$') || !label.ends_with('$') {
                return Err(Error::Invalid(format!(
                    "cluster label {label:?} must begin and end with '$'"
                )));
            }
            for word in words {
                if clusters.contains_key(word) {
                    return Err(Error::Invalid(format!(
                        "cluster word {word:?} collides with a cluster label"
                    )));
                }
                if word_to_label.insert(word.clone(), label.clone()).is_some() {
                    return Err(Error::Invalid(format!(
                        "cluster word {word:?} appears in more than one cluster"
                    )));
                }
            }
        }
        Ok(ClusterMap { clusters, word_to_label })
    }

    /// Parses the one-line-per-cluster file format: `$label$: word1 word2 ...`.
    pub fn parse(text: &str) -> Result<ClusterMap> {
        let mut clusters = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, rest) = line.split_once(':').ok_or(Error::Parse {
                line: i + 1,
                msg: "expected `$label$: word1 word2 ...`".into(),
            })?;
            let words: BTreeSet<String> =
                rest.split_whitespace().map(|w| w.to_lowercase()).collect();
            if clusters.insert(label.trim().to_string(), words).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate cluster label {:?}", label.trim()),
                });
            }
        }
        ClusterMap::new(clusters)
    }

    pub fn label_for(&self, word: &str) -> Option<&str> {
        self.word_to_label.get(word).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.clusters
    }
}

/// Contextual features of one utterance, as seen by rule conditions.
///
/// Tag context reads working tags and never crosses dialogue boundaries:
/// offsets outside the dialogue report [`Tag::NONE`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureView {
    pub change_of_speaker: bool,
    pub length: usize,
    /// Working tags at offsets -1..-W, in that order.
    pub preceding_tags: Vec<Tag>,
    /// Working tags at offsets +1..+W, in that order.
    pub following_tags: Vec<Tag>,
    /// The full token string, present only for utterances of at most three tokens.
    pub whole_utterance: Option<String>,
    pub punctuation: BTreeSet<char>,
    /// All token n-grams of length 1-3, space-joined.
    pub substrings_present: BTreeSet<String>,
}

/// Lowercases, splits on whitespace, strips punctuation-alphabet symbols
/// into the punctuation set, and splits contractions ("don't" -> "do",
/// "n't"; "'bout" stays whole).
pub fn tokenize(raw: &str) -> (Vec<String>, BTreeSet<char>) {
    let mut tokens = Vec::new();
    let mut punctuation = BTreeSet::new();
    for word in raw.to_lowercase().split_whitespace() {
        let mut stripped = String::with_capacity(word.len());
        for ch in word.chars() {
            if PUNCTUATION_ALPHABET.contains(&ch) {
                punctuation.insert(ch);
            } else {
                stripped.push(ch);
            }
        }
        split_contractions(&stripped, &mut tokens);
    }
    (tokens, punctuation)
}

/// Recursively splits clitics off a token so the result is a fixed point of
/// tokenization. The negative contraction keeps its `n`: "can't" -> "ca" + "n't".
fn split_contractions(token: &str, out: &mut Vec<String>) {
    if token.is_empty() {
        return;
    }
    if token == "n't" {
        out.push(token.to_string());
        return;
    }
    if token.len() > 3 && token.ends_with("n't") {
        split_contractions(&token[..token.len() - 3], out);
        out.push("n't".to_string());
        return;
    }
    if let Some(pos) = token.rfind('\'') {
        if pos > 0 && pos < token.len() - 1 {
            split_contractions(&token[..pos], out);
            out.push(token[pos..].to_string());
            return;
        }
    }
    out.push(token.to_string());
}

/// All space-joined token n-grams of length `1..=max_len`.
pub(crate) fn ngrams_up_to(tokens: &[String], max_len: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for n in 1..=max_len {
        if n > tokens.len() {
            break;
        }
        for window in tokens.windows(n) {
            out.insert(window.join(" "));
        }
    }
    out
}

/// Parses a corpus file. Gold tags come from the file; working tags are
/// `NONE`. The tag set is the union of declared and observed tags.
pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut declared: Option<BTreeSet<Tag>> = None;
    let mut dialogues: Vec<Dialogue> = Vec::new();
    let mut observed: BTreeSet<Tag> = BTreeSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with("##") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#tags:") {
            if declared.is_some() {
                return Err(Error::Parse { line: line_no, msg: "duplicate #tags: header".into() });
            }
            if !dialogues.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "#tags: header must precede all dialogues".into(),
                });
            }
            let mut tags = BTreeSet::new();
            for label in rest.split_whitespace() {
                tags.insert(Tag::new(label).map_err(|e| Error::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })?);
            }
            declared = Some(tags);
            continue;
        }
        if let Some(rest) = line.strip_prefix("#dialogue:") {
            let id = rest.trim();
            if id.is_empty() {
                return Err(Error::Parse { line: line_no, msg: "dialogue id is empty".into() });
            }
            dialogues.push(Dialogue { id: id.to_string(), utterances: Vec::new() });
            continue;
        }
        if line.starts_with('#') {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("unknown directive {:?}", line.split_whitespace().next().unwrap_or("#")),
            });
        }

        let mut fields = line.splitn(3, '\t');
        let speaker = fields.next().unwrap_or("");
        let (tag_field, raw_text) = match (fields.next(), fields.next()) {
            (Some(tag), rest) => (tag, rest.unwrap_or("")),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected `speaker<TAB>tag<TAB>text`".into(),
                })
            }
        };
        let gold_tag: Tag = tag_field
            .parse()
            .map_err(|e: Error| Error::Parse { line: line_no, msg: e.to_string() })?;
        if let (Some(declared), Some(_)) = (&declared, gold_tag.label()) {
            if !declared.contains(&gold_tag) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("tag {gold_tag} is not in the declared tag set"),
                });
            }
        }
        if !gold_tag.is_none() {
            observed.insert(gold_tag.clone());
        }
        let dialogue = dialogues.last_mut().ok_or(Error::Parse {
            line: line_no,
            msg: "utterance line before any #dialogue: header".into(),
        })?;
        let (tokens, punctuation) = tokenize(raw_text);
        dialogue.utterances.push(Utterance {
            speaker: speaker.to_string(),
            tokens,
            punctuation,
            gold_tag,
            working_tag: Tag::NONE,
            index_in_dialogue: dialogue.utterances.len(),
        });
    }

    let mut tag_set = declared.unwrap_or_default();
    tag_set.extend(observed);
    Ok(Corpus { dialogues, tag_set })
}

/// Writes a corpus back to the file format, with the chosen tag column.
/// Parsing the result of `serialize_corpus(parse_corpus(t), Gold)` yields
/// the same corpus again.
pub fn serialize_corpus(corpus: &Corpus, column: TagColumn) -> String {
    let mut tags: BTreeSet<Tag> = corpus.tag_set.clone();
    for (_, _, utt) in corpus.iter_utterances() {
        let written = match column {
            TagColumn::Gold => &utt.gold_tag,
            TagColumn::Working => &utt.working_tag,
        };
        if !written.is_none() {
            tags.insert(written.clone());
        }
    }

    let mut out = String::new();
    if !tags.is_empty() {
        out.push_str("#tags:");
        for tag in &tags {
            out.push(' ');
            out.push_str(&tag.to_string());
        }
        out.push('\n');
    }
    for dlg in &corpus.dialogues {
        out.push_str("#dialogue: ");
        out.push_str(&dlg.id);
        out.push('\n');
        for utt in &dlg.utterances {
            let tag = match column {
                TagColumn::Gold => &utt.gold_tag,
                TagColumn::Working => &utt.working_tag,
            };
            out.push_str(&utt.speaker);
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\t');
            let mut text = utt.tokens.join(" ");
            for p in &utt.punctuation {
                if !text.is_empty() {
                    text.push(' ');
                }
                text.push(*p);
            }
            out.push_str(&text);
            out.push('\n');
        }
    }
    out
}

/// Replaces every token that belongs to a cluster with its cluster label.
/// Idempotent, since labels are never cluster members.
pub fn apply_clusters(corpus: &Corpus, map: &ClusterMap) -> Corpus {
    let mut out = corpus.clone();
    for dlg in &mut out.dialogues {
        for utt in &mut dlg.utterances {
            for token in &mut utt.tokens {
                if let Some(label) = map.label_for(token) {
                    *token = label.to_string();
                }
            }
        }
    }
    out
}

/// Computes the feature view of one utterance with tag context window `w`.
/// Tag context reads working tags.
pub fn feature_view(corpus: &Corpus, dialogue_idx: usize, utt_idx: usize, w: usize) -> Result<FeatureView> {
    if w < 1 {
        return Err(Error::Invalid("context window must be at least 1".into()));
    }
    let dlg = corpus
        .dialogues
        .get(dialogue_idx)
        .ok_or_else(|| Error::OutOfRange(format!("dialogue index {dialogue_idx}")))?;
    let utt = dlg
        .utterances
        .get(utt_idx)
        .ok_or_else(|| Error::OutOfRange(format!("utterance index {utt_idx}")))?;

    let tag_at = |offset: isize| -> Tag {
        let target = utt_idx as isize + offset;
        if target < 0 || target >= dlg.utterances.len() as isize {
            Tag::NONE
        } else {
            dlg.utterances[target as usize].working_tag.clone()
        }
    };
    let preceding_tags = (1..=w).map(|k| tag_at(-(k as isize))).collect();
    let following_tags = (1..=w).map(|k| tag_at(k as isize)).collect();

    Ok(FeatureView {
        change_of_speaker: change_of_speaker(dlg, utt_idx),
        length: utt.tokens.len(),
        preceding_tags,
        following_tags,
        whole_utterance: whole_utterance(&utt.tokens),
        punctuation: utt.punctuation.clone(),
        substrings_present: ngrams_up_to(&utt.tokens, 3),
    })
}

/// True iff the previous utterance has a different speaker; true for the
/// first utterance of a dialogue.
pub(crate) fn change_of_speaker(dlg: &Dialogue, utt_idx: usize) -> bool {
    match utt_idx.checked_sub(1).and_then(|p| dlg.utterances.get(p)) {
        Some(prev) => prev.speaker != dlg.utterances[utt_idx].speaker,
        None => true,
    }
}

pub(crate) fn whole_utterance(tokens: &[String]) -> Option<String> {
    if tokens.len() <= 3 {
        Some(tokens.join(" "))
    } else {
        None
    }
}
