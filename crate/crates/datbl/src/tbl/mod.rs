//! Transformation-based learning of ordered rule lists.
//!
//! Training greedily appends the candidate rule with the highest
//! improvement score (weighted count of tags fixed minus tags broken,
//! scored corpus-wide) until no candidate reaches the threshold `theta`.
//! Candidates are template instantiations bound at mistagged utterances;
//! the Monte Carlo trainer draws only `r_sample` of them per utterance.
//!
//! Rules serialize one per line as `IF cond1 AND cond2 THEN TAG`, with `*`
//! standing for the empty condition list. Ties between equal-scoring
//! candidates go to the lowest serialization, which makes training fully
//! deterministic.

mod engine;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{Corpus, Tag, PUNCTUATION_ALPHABET};
use crate::cues::CueSet;
use crate::{Error, Result};

pub(crate) use engine::Workbench;

/// One conjunct of a rule. Tag conditions read working tags.
#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    /// The utterance contains this token n-gram (one to three tokens).
    ContainsCue(String),
    LengthLessThan(usize),
    ChangeOfSpeakerIs(bool),
    /// The working tag at a nonzero utterance offset; `Tag::NONE` both for
    /// untagged neighbors and for offsets outside the dialogue.
    TagAtOffset { offset: i32, tag: Tag },
    PunctuationContains(char),
    /// The whole utterance equals this token string (at most three tokens).
    WholeUtteranceIs(String),
}

impl Condition {
    pub fn validate(&self) -> Result<()> {
        match self {
            Condition::ContainsCue(s) => {
                let n = s.split(' ').filter(|t| !t.is_empty()).count();
                if s.is_empty() || n == 0 || n > 3 || s.contains("  ") {
                    return Err(Error::Invalid(format!(
                        "cue {s:?} must be a space-joined n-gram of 1-3 tokens"
                    )));
                }
                // normalized tokens only; anything else could never match
                // an utterance and would not survive the rule syntax
                if crate::corpus::tokenize(s).0.join(" ") != *s {
                    return Err(Error::Invalid(format!(
                        "cue {s:?} is not in corpus tokenization"
                    )));
                }
            }
            Condition::LengthLessThan(n) => {
                if *n < 1 {
                    return Err(Error::Invalid("length bound must be at least 1".into()));
                }
            }
            Condition::TagAtOffset { offset, .. } => {
                if *offset == 0 {
                    return Err(Error::Invalid("tag offset must be nonzero".into()));
                }
            }
            Condition::PunctuationContains(c) => {
                if !PUNCTUATION_ALPHABET.contains(c) {
                    return Err(Error::Invalid(format!(
                        "{c:?} is not in the punctuation alphabet"
                    )));
                }
            }
            Condition::WholeUtteranceIs(s) => {
                if s.split(' ').filter(|t| !t.is_empty()).count() > 3 {
                    return Err(Error::Invalid(format!(
                        "whole-utterance condition {s:?} exceeds three tokens"
                    )));
                }
                if crate::corpus::tokenize(s).0.join(" ") != *s {
                    return Err(Error::Invalid(format!(
                        "whole-utterance condition {s:?} is not in corpus tokenization"
                    )));
                }
            }
            Condition::ChangeOfSpeakerIs(_) => {}
        }
        Ok(())
    }

    /// Evaluates the condition against precomputed utterance features and a
    /// tag-context accessor.
    pub(crate) fn holds<'a>(
        &self,
        features: &engine::Features,
        tag_at: impl Fn(i32) -> &'a Tag,
    ) -> bool {
        match self {
            Condition::ContainsCue(s) => features.ngrams.contains(s.as_str()),
            Condition::LengthLessThan(n) => features.len < *n,
            Condition::ChangeOfSpeakerIs(b) => features.change_of_speaker == *b,
            Condition::TagAtOffset { offset, tag } => tag_at(*offset) == tag,
            Condition::PunctuationContains(c) => features.punct.contains(c),
            Condition::WholeUtteranceIs(s) => features.whole.as_deref() == Some(s.as_str()),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some(next) => out.push(next),
                None => return Err(Error::Invalid(format!("dangling escape in {s:?}"))),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::ContainsCue(s) => write!(f, "contains(\"{}\")", escape(s)),
            Condition::LengthLessThan(n) => write!(f, "length<{n}"),
            Condition::ChangeOfSpeakerIs(b) => write!(f, "speaker_change={b}"),
            Condition::TagAtOffset { offset, tag } => write!(f, "tag[{offset:+}]={tag}"),
            Condition::PunctuationContains(c) => write!(f, "punct=\"{c}\""),
            Condition::WholeUtteranceIs(s) => write!(f, "utterance=\"{}\"", escape(s)),
        }
    }
}

pub(crate) fn parse_condition(s: &str) -> Result<Condition> {
    let bad = || Error::Invalid(format!("cannot parse condition {s:?}"));
    let cond = if let Some(rest) = s.strip_prefix("contains(\"") {
        let inner = rest.strip_suffix("\")").ok_or_else(bad)?;
        Condition::ContainsCue(unescape(inner)?)
    } else if let Some(rest) = s.strip_prefix("length<") {
        Condition::LengthLessThan(rest.parse().map_err(|_| bad())?)
    } else if let Some(rest) = s.strip_prefix("speaker_change=") {
        Condition::ChangeOfSpeakerIs(rest.parse().map_err(|_| bad())?)
    } else if let Some(rest) = s.strip_prefix("tag[") {
        let (offset, tag) = rest.split_once("]=").ok_or_else(bad)?;
        Condition::TagAtOffset {
            offset: offset.trim_start_matches('+').parse().map_err(|_| bad())?,
            tag: tag.parse()?,
        }
    } else if let Some(rest) = s.strip_prefix("punct=\"") {
        let inner = rest.strip_suffix('"').ok_or_else(bad)?;
        let mut chars = inner.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Condition::PunctuationContains(c),
            _ => return Err(bad()),
        }
    } else if let Some(rest) = s.strip_prefix("utterance=\"") {
        let inner = rest.strip_suffix('"').ok_or_else(bad)?;
        Condition::WholeUtteranceIs(unescape(inner)?)
    } else {
        return Err(bad());
    };
    cond.validate()?;
    Ok(cond)
}

/// Builds the canonical one-line form `IF ... THEN tag`, with conditions
/// sorted by their own serialization. This string is also the tie-break
/// order between equal-scoring candidates.
pub(crate) fn canonical_rule_string(conditions: &[Condition], new_tag: &Tag) -> String {
    let mut parts: Vec<String> = conditions.iter().map(Condition::to_string).collect();
    parts.sort();
    parts.dedup();
    let body = if parts.is_empty() { "*".to_string() } else { parts.join(" AND ") };
    format!("IF {body} THEN {new_tag}")
}

/// A conjunction of conditions plus a replacement tag. The condition list
/// may be empty, matching every utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    conditions: Vec<Condition>,
    new_tag: Tag,
}

impl Rule {
    /// Validates and canonicalizes: conditions are sorted by serialization
    /// and deduplicated; at most one tag condition per offset, at most one
    /// length bound; the new tag must not be `NONE`.
    pub fn new(conditions: Vec<Condition>, new_tag: Tag) -> Result<Rule> {
        if new_tag.is_none() {
            return Err(Error::Invalid("rule tag must not be NONE".into()));
        }
        for cond in &conditions {
            cond.validate()?;
        }
        let mut with_keys: Vec<(String, Condition)> =
            conditions.into_iter().map(|c| (c.to_string(), c)).collect();
        with_keys.sort_by(|a, b| a.0.cmp(&b.0));
        with_keys.dedup_by(|a, b| a.0 == b.0);
        let conditions: Vec<Condition> = with_keys.into_iter().map(|(_, c)| c).collect();

        let mut offsets = HashSet::new();
        let mut length_bounds = 0;
        for cond in &conditions {
            match cond {
                Condition::TagAtOffset { offset, .. } => {
                    if !offsets.insert(*offset) {
                        return Err(Error::Invalid(format!(
                            "two tag conditions at offset {offset}"
                        )));
                    }
                }
                Condition::LengthLessThan(_) => {
                    length_bounds += 1;
                    if length_bounds > 1 {
                        return Err(Error::Invalid("two length bounds in one rule".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(Rule { conditions, new_tag })
    }

    pub fn unconditional(new_tag: Tag) -> Result<Rule> {
        Rule::new(Vec::new(), new_tag)
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn new_tag(&self) -> &Tag {
        &self.new_tag
    }

    pub fn parse(line: &str) -> Result<Rule> {
        let rest = line
            .strip_prefix("IF ")
            .ok_or_else(|| Error::Invalid(format!("rule must start with `IF `: {line:?}")))?;
        let (body, tag) = rest
            .split_once(" THEN ")
            .ok_or_else(|| Error::Invalid(format!("rule is missing ` THEN `: {line:?}")))?;
        let conditions = if body == "*" {
            Vec::new()
        } else {
            body.split(" AND ").map(parse_condition).collect::<Result<Vec<_>>>()?
        };
        Rule::new(conditions, tag.trim().parse()?)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_rule_string(&self.conditions, &self.new_tag))
    }
}

/// One slot of a rule template; instantiation binds it to the values
/// realized at a mistagged utterance.
#[derive(Clone, Debug, PartialEq)]
pub enum ConditionSchema {
    /// A cue-set member present in the utterance.
    Cue,
    /// The working tag actually found at this offset.
    TagAt(i32),
    /// A length bound from this pool that the utterance satisfies.
    LengthLessThan(Vec<usize>),
    SpeakerChange,
    /// A punctuation symbol found in the utterance.
    Punctuation,
    WholeUtterance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub id: String,
    pub schema: Vec<ConditionSchema>,
}

/// An ordered, identifiable collection of templates.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    id: String,
    templates: Vec<Template>,
}

impl TemplateSet {
    /// The default inventory T1-T11: cue, cue+previous tag, previous tag,
    /// length+previous tag, speaker change (alone and with previous tag),
    /// punctuation, whole utterance, unconditional, cue+following tag, and
    /// the two-tag history.
    pub fn default_set() -> TemplateSet {
        let length_pool = vec![2, 3, 4, 5];
        let t = |id: &str, schema: Vec<ConditionSchema>| Template { id: id.to_string(), schema };
        TemplateSet {
            id: "default".to_string(),
            templates: vec![
                t("T1", vec![ConditionSchema::Cue]),
                t("T2", vec![ConditionSchema::Cue, ConditionSchema::TagAt(-1)]),
                t("T3", vec![ConditionSchema::TagAt(-1)]),
                t(
                    "T4",
                    vec![ConditionSchema::LengthLessThan(length_pool), ConditionSchema::TagAt(-1)],
                ),
                t("T5", vec![ConditionSchema::SpeakerChange]),
                t("T6", vec![ConditionSchema::SpeakerChange, ConditionSchema::TagAt(-1)]),
                t("T7", vec![ConditionSchema::Punctuation]),
                t("T8", vec![ConditionSchema::WholeUtterance]),
                t("T9", vec![]),
                t("T10", vec![ConditionSchema::Cue, ConditionSchema::TagAt(1)]),
                t("T11", vec![ConditionSchema::TagAt(-2), ConditionSchema::TagAt(-1)]),
            ],
        }
    }

    /// A subset of the default inventory by template id, e.g.
    /// `["T1", "T2", "T3", "T9"]`. Order follows the default set.
    pub fn subset(ids: &[&str]) -> Result<TemplateSet> {
        let default = TemplateSet::default_set();
        for id in ids {
            if !default.templates.iter().any(|t| t.id == *id) {
                return Err(Error::Invalid(format!("unknown template id {id:?}")));
            }
        }
        let templates: Vec<Template> = default
            .templates
            .into_iter()
            .filter(|t| ids.contains(&t.id.as_str()))
            .collect();
        if templates.is_empty() {
            return Err(Error::Invalid("template set must not be empty".into()));
        }
        let id = templates.iter().map(|t| t.id.as_str()).collect::<Vec<_>>().join("+");
        Ok(TemplateSet { id, templates })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    /// The largest tag-context offset any template uses.
    pub fn max_offset(&self) -> usize {
        self.templates
            .iter()
            .flat_map(|t| &t.schema)
            .filter_map(|s| match s {
                ConditionSchema::TagAt(off) => Some(off.unsigned_abs() as usize),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Exhaustive,
    MonteCarlo,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainMode::Exhaustive => f.write_str("exhaustive"),
            TrainMode::MonteCarlo => f.write_str("monte-carlo"),
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<TrainMode> {
        match s {
            "exhaustive" => Ok(TrainMode::Exhaustive),
            "monte-carlo" => Ok(TrainMode::MonteCarlo),
            _ => Err(Error::Invalid(format!("unknown training mode {s:?}"))),
        }
    }
}

/// Training parameters. `weights` are per-utterance in flat corpus order;
/// `None` means unit weights.
#[derive(Clone, Debug)]
pub struct TrainingConfig {
    /// Improvement-score threshold; training stops below it.
    pub theta: f64,
    /// Monte Carlo sample size per mistagged utterance.
    pub r_sample: usize,
    /// Safety cap on the number of learned rules.
    pub max_rules: usize,
    pub seed: u64,
    pub weights: Option<Vec<f64>>,
    /// Tag-context window, in utterances, on each side.
    pub window: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            theta: 1.0,
            r_sample: 14,
            max_rules: 1000,
            seed: 0,
            weights: None,
            window: 2,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, utterance_count: usize) -> Result<()> {
        if self.theta.is_nan() || self.theta < 1.0 {
            return Err(Error::Invalid(format!("theta must be at least 1, got {}", self.theta)));
        }
        if self.r_sample < 1 {
            return Err(Error::Invalid("r_sample must be at least 1".into()));
        }
        if self.max_rules < 1 {
            return Err(Error::Invalid("max_rules must be at least 1".into()));
        }
        if self.window < 1 {
            return Err(Error::Invalid("window must be at least 1".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != utterance_count {
                return Err(Error::Invalid(format!(
                    "{} weights for {} utterances",
                    w.len(),
                    utterance_count
                )));
            }
            if !w.iter().all(|x| x.is_finite() && *x > 0.0) {
                return Err(Error::Invalid("weights must be positive and finite".into()));
            }
        }
        Ok(())
    }
}

/// The configuration snapshot a trained model carries.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMeta {
    pub mode: TrainMode,
    pub theta: f64,
    pub window: usize,
    pub templates_id: String,
    pub cues_hash: String,
    pub seed: u64,
}

/// An ordered rule sequence; immutable after training.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    meta: ModelMeta,
    rules: Vec<Rule>,
}

impl Model {
    pub fn new(meta: ModelMeta, rules: Vec<Rule>) -> Model {
        Model { meta, rules }
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// The line-oriented model file: a header block followed by one rule
    /// per line. Round-trips through [`Model::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("#mode {}\n", self.meta.mode));
        out.push_str(&format!("#theta {}\n", self.meta.theta));
        out.push_str(&format!("#window {}\n", self.meta.window));
        out.push_str(&format!("#templates {}\n", self.meta.templates_id));
        out.push_str(&format!("#cues-hash {}\n", self.meta.cues_hash));
        out.push_str(&format!("#seed {}\n", self.meta.seed));
        for rule in &self.rules {
            out.push_str(&rule.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Model> {
        let mut mode = None;
        let mut theta = None;
        let mut window = None;
        let mut templates_id = None;
        let mut cues_hash = None;
        let mut seed = None;
        let mut rules = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: line_no, msg };
            if let Some(rest) = line.strip_prefix('#') {
                if !rules.is_empty() {
                    return Err(parse_err("header line after rules".into()));
                }
                let (key, value) = rest
                    .split_once(' ')
                    .ok_or_else(|| parse_err(format!("malformed header {line:?}")))?;
                match key {
                    "mode" => mode = Some(value.parse::<TrainMode>().map_err(|e| parse_err(e.to_string()))?),
                    "theta" => theta = Some(value.parse::<f64>().map_err(|_| parse_err(format!("bad theta {value:?}")))?),
                    "window" => window = Some(value.parse::<usize>().map_err(|_| parse_err(format!("bad window {value:?}")))?),
                    "templates" => templates_id = Some(value.to_string()),
                    "cues-hash" => cues_hash = Some(value.to_string()),
                    "seed" => seed = Some(value.parse::<u64>().map_err(|_| parse_err(format!("bad seed {value:?}")))?),
                    _ => return Err(parse_err(format!("unknown header key {key:?}"))),
                }
            } else {
                rules.push(Rule::parse(line).map_err(|e| parse_err(e.to_string()))?);
            }
        }

        let meta = ModelMeta {
            mode: mode.ok_or_else(|| Error::Invalid("model file is missing #mode".into()))?,
            theta: theta.ok_or_else(|| Error::Invalid("model file is missing #theta".into()))?,
            window: window.ok_or_else(|| Error::Invalid("model file is missing #window".into()))?,
            templates_id: templates_id
                .ok_or_else(|| Error::Invalid("model file is missing #templates".into()))?,
            cues_hash: cues_hash
                .ok_or_else(|| Error::Invalid("model file is missing #cues-hash".into()))?,
            seed: seed.ok_or_else(|| Error::Invalid("model file is missing #seed".into()))?,
        };
        Ok(Model { meta, rules })
    }
}

/// Per-pass training diagnostics: the selected rule's improvement score and
/// how many tags its application changed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PassStat {
    pub score: f64,
    pub changed: usize,
}

/// A trained model plus its training trace.
#[derive(Clone, Debug)]
pub struct TrainReport {
    model: Model,
    passes: Vec<PassStat>,
    training_accuracy: f64,
}

impl TrainReport {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn passes(&self) -> &[PassStat] {
        &self.passes
    }

    pub fn training_accuracy(&self) -> f64 {
        self.training_accuracy
    }
}

/// True iff every condition of the rule holds at the given utterance.
pub fn rule_matches(rule: &Rule, corpus: &Corpus, dialogue_idx: usize, utt_idx: usize) -> Result<bool> {
    let dlg = corpus
        .dialogues
        .get(dialogue_idx)
        .ok_or_else(|| Error::OutOfRange(format!("dialogue index {dialogue_idx}")))?;
    if utt_idx >= dlg.utterances.len() {
        return Err(Error::OutOfRange(format!("utterance index {utt_idx}")));
    }
    let features = engine::features_of(dlg, utt_idx);
    let none = Tag::NONE;
    let tag_at = |offset: i32| -> &Tag {
        let pos = utt_idx as i64 + i64::from(offset);
        if pos < 0 || pos >= dlg.utterances.len() as i64 {
            &none
        } else {
            &dlg.utterances[pos as usize].working_tag
        }
    };
    Ok(rule.conditions().iter().all(|c| c.holds(&features, tag_at)))
}

/// Relabels every matching utterance with the rule's tag. Matching is
/// evaluated against the tags as they stood before this call, so the pass
/// is simultaneous across utterances. Returns how many tags changed.
pub fn apply_rule(rule: &Rule, corpus: &mut Corpus) -> usize {
    let mut wb = Workbench::build(corpus, &CueSet::empty(), None).expect("unit weights");
    let changed = wb.apply(rule.conditions(), rule.new_tag());
    wb.write_back(corpus);
    changed
}

/// Weighted number of correct tags after a hypothetical application of the
/// rule, minus the weighted number before. The corpus is not mutated;
/// utterances without a gold tag are ignored.
pub fn improvement_score(rule: &Rule, corpus: &Corpus, weights: Option<&[f64]>) -> Result<f64> {
    let wb = Workbench::build(corpus, &CueSet::empty(), weights)?;
    Ok(wb.score(rule.conditions(), rule.new_tag()))
}

/// Every rule obtainable by binding the templates' variables to values
/// realized at this utterance, each correcting its gold tag. Empty when the
/// utterance has no gold tag.
pub fn instantiate_all(
    corpus: &Corpus,
    templates: &TemplateSet,
    cues: &CueSet,
    dialogue_idx: usize,
    utt_idx: usize,
) -> Result<Vec<Rule>> {
    let wb = Workbench::build(corpus, cues, None)?;
    let flat = wb.flat_index(dialogue_idx, utt_idx)?;
    let mut rules = wb
        .instantiate(templates, flat)
        .into_iter()
        .map(|(conds, tag)| Rule::new(conds, tag))
        .collect::<Result<Vec<_>>>()?;
    rules.sort_by_cached_key(Rule::to_string);
    rules.dedup_by_key(|r| r.to_string());
    Ok(rules)
}

fn train(
    corpus: &mut Corpus,
    templates: &TemplateSet,
    cues: &CueSet,
    config: &TrainingConfig,
    mode: TrainMode,
) -> Result<TrainReport> {
    config.validate(corpus.utterance_count())?;
    let max_offset = templates.max_offset();
    if max_offset > config.window {
        return Err(Error::Invalid(format!(
            "template set {} uses tag offsets up to {max_offset}, beyond window {}",
            templates.id(),
            config.window
        )));
    }
    corpus.reset_working_tags();
    let mut wb = Workbench::build(corpus, cues, config.weights.as_deref())?;
    let (rules, passes) = engine::train_loop(&mut wb, templates, config, mode)?;
    wb.write_back(corpus);
    let meta = ModelMeta {
        mode,
        theta: config.theta,
        window: config.window,
        templates_id: templates.id().to_string(),
        cues_hash: cues.content_hash(),
        seed: config.seed,
    };
    Ok(TrainReport {
        model: Model::new(meta, rules),
        passes,
        training_accuracy: wb.accuracy(),
    })
}

/// Greedy training over the full candidate pool of every mistagged
/// utterance, each pass. Deterministic; leaves the corpus carrying its
/// final training tags.
pub fn train_exhaustive(
    corpus: &mut Corpus,
    templates: &TemplateSet,
    cues: &CueSet,
    config: &TrainingConfig,
) -> Result<TrainReport> {
    train(corpus, templates, cues, config, TrainMode::Exhaustive)
}

/// Like [`train_exhaustive`], but per mistagged utterance only `r_sample`
/// candidates are drawn (template chosen uniformly, then each variable
/// bound uniformly among its realized values). When `r_sample` covers an
/// utterance's whole pool, the pool is enumerated instead, so a large
/// enough sample reproduces exhaustive training exactly. Reproducible from
/// the seed.
pub fn train_monte_carlo(
    corpus: &mut Corpus,
    templates: &TemplateSet,
    cues: &CueSet,
    config: &TrainingConfig,
) -> Result<TrainReport> {
    train(corpus, templates, cues, config, TrainMode::MonteCarlo)
}

/// Applies the model's rules, in order, to a copy of the corpus whose
/// working tags start from `NONE`. Gold tags never influence the result.
pub fn tag_corpus(model: &Model, corpus: &Corpus) -> Corpus {
    let mut out = corpus.clone();
    out.reset_working_tags();
    let mut wb = Workbench::build(&out, &CueSet::empty(), None).expect("unit weights");
    for rule in model.rules() {
        wb.apply(rule.conditions(), rule.new_tag());
    }
    wb.write_back(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;
    use crate::cues::{substring_source, CueConfig, SubstringMode};

    fn tag(label: &str) -> Tag {
        Tag::new(label).unwrap()
    }

    fn all_ngrams(corpus: &Corpus) -> CueSet {
        let config = CueConfig { mode: SubstringMode::AllNgrams, ..CueConfig::default() };
        substring_source(corpus, &config, None).unwrap()
    }

    fn five_rule_model() -> Model {
        let text = "\
#mode exhaustive
#theta 1
#window 2
#templates default
#cues-hash 0000000000000000
#seed 0
IF * THEN SUGGEST
IF contains(\"see\") AND contains(\"you\") THEN BYE
IF contains(\"sounds\") THEN ACCEPT
IF length<4 AND tag[-1]=? THEN GREET
IF contains(\"no\") AND tag[-1]=SUGGEST THEN REJECT
";
        Model::parse(text).unwrap()
    }

    #[test]
    fn rule_canonical_form() {
        let rule = Rule::new(
            vec![
                Condition::TagAtOffset { offset: -1, tag: tag("SUGGEST") },
                Condition::ContainsCue("no".into()),
            ],
            tag("REJECT"),
        )
        .unwrap();
        assert_eq!(rule.to_string(), "IF contains(\"no\") AND tag[-1]=SUGGEST THEN REJECT");
        assert_eq!(Rule::parse(&rule.to_string()).unwrap(), rule);

        let unconditional = Rule::unconditional(tag("SUGGEST")).unwrap();
        assert_eq!(unconditional.to_string(), "IF * THEN SUGGEST");
        assert_eq!(Rule::parse("IF * THEN SUGGEST").unwrap(), unconditional);
    }

    #[test]
    fn rule_invariants() {
        assert!(Rule::new(vec![], Tag::NONE).is_err());
        assert!(Rule::new(
            vec![
                Condition::TagAtOffset { offset: -1, tag: tag("A") },
                Condition::TagAtOffset { offset: -1, tag: tag("B") },
            ],
            tag("C"),
        )
        .is_err());
        assert!(Rule::new(
            vec![Condition::LengthLessThan(2), Condition::LengthLessThan(4)],
            tag("C"),
        )
        .is_err());
        assert!(Rule::new(vec![Condition::TagAtOffset { offset: 0, tag: tag("A") }], tag("C")).is_err());
        assert!(Rule::new(vec![Condition::ContainsCue("a b c d".into())], tag("C")).is_err());
        // cue strings must be tokenizer fixed points
        assert!(Rule::new(vec![Condition::ContainsCue("A AND B".into())], tag("C")).is_err());
        assert!(Rule::new(vec![Condition::WholeUtteranceIs("No,".into())], tag("C")).is_err());
        assert!(Rule::new(vec![Condition::ContainsCue("$weekday$".into())], tag("C")).is_ok());
    }

    #[test]
    fn condition_roundtrip_with_quotes() {
        let cond = Condition::ContainsCue("a\"b".into());
        let text = cond.to_string();
        assert_eq!(parse_condition(&text).unwrap(), cond);
        assert_eq!(parse_condition("tag[+1]=?").unwrap(), Condition::TagAtOffset {
            offset: 1,
            tag: Tag::NONE,
        });
    }

    #[test]
    fn contextual_rejection_rule_matching() {
        let mut corpus = parse_corpus(
            "#dialogue: d\nA\tSUGGEST\thow about monday\nB\tREJECT\tno\n",
        )
        .unwrap();
        let rule = Rule::parse("IF contains(\"no\") AND tag[-1]=SUGGEST THEN REJECT").unwrap();

        corpus.dialogues[0].utterances[0].working_tag = tag("SUGGEST");
        assert!(rule_matches(&rule, &corpus, 0, 1).unwrap());

        corpus.dialogues[0].utterances[0].working_tag = tag("ACCEPT");
        assert!(!rule_matches(&rule, &corpus, 0, 1).unwrap());

        let unconditional = Rule::unconditional(tag("SUGGEST")).unwrap();
        assert!(rule_matches(&unconditional, &corpus, 0, 0).unwrap());
        assert!(rule_matches(&unconditional, &corpus, 0, 1).unwrap());

        assert!(rule_matches(&rule, &corpus, 0, 2).is_err());
    }

    #[test]
    fn apply_rule_counts_changes() {
        let mut text = String::from("#dialogue: d\n");
        for i in 0..10 {
            text.push_str(&format!("A\tSUGGEST\tword{i}\n"));
        }
        let mut corpus = parse_corpus(&text).unwrap();
        let rule = Rule::unconditional(tag("SUGGEST")).unwrap();
        assert_eq!(apply_rule(&rule, &mut corpus), 10);
        // second application changes nothing
        assert_eq!(apply_rule(&rule, &mut corpus), 0);
    }

    /// The classic five-rule model hand-traced over a short dialogue.
    #[test]
    fn five_rule_model_hand_trace() {
        let corpus = parse_corpus(
            "#dialogue: d\n\
             A\t?\thello\n\
             B\t?\thow about monday ?\n\
             A\t?\tno that is bad\n\
             B\t?\tsounds good\n\
             A\t?\tsee you tomorrow\n",
        )
        .unwrap();
        let tagged = tag_corpus(&five_rule_model(), &corpus);
        let got: Vec<String> = tagged
            .iter_utterances()
            .map(|(_, _, u)| u.working_tag.to_string())
            .collect();
        assert_eq!(got, vec!["GREET", "SUGGEST", "REJECT", "ACCEPT", "BYE"]);
    }

    #[test]
    fn model_order_matters_and_empty_model_is_none() {
        let corpus = parse_corpus("#dialogue: d\nA\t?\thi\nB\t?\tyo\n").unwrap();
        let meta = five_rule_model().meta().clone();

        let empty = Model::new(meta.clone(), vec![]);
        assert!(tag_corpus(&empty, &corpus)
            .iter_utterances()
            .all(|(_, _, u)| u.working_tag.is_none()));

        let ab = Model::new(
            meta,
            vec![
                Rule::unconditional(tag("A")).unwrap(),
                Rule::unconditional(tag("B")).unwrap(),
            ],
        );
        assert!(tag_corpus(&ab, &corpus)
            .iter_utterances()
            .all(|(_, _, u)| u.working_tag == tag("B")));
    }

    #[test]
    fn retagging_is_idempotent() {
        let corpus = parse_corpus(
            "#dialogue: d\nA\t?\thello\nB\t?\tno\nA\t?\tsounds fine\n",
        )
        .unwrap();
        let model = five_rule_model();
        let once = tag_corpus(&model, &corpus);
        let twice = tag_corpus(&model, &once);
        assert_eq!(once, twice);
    }

    /// Spec example: a rule that fixes three wrong tags and breaks one
    /// right one scores +2 with unit weights, +5 when the fixed utterances
    /// carry weight 2.
    #[test]
    fn improvement_score_counts_fixes_minus_breaks() {
        let mut corpus = parse_corpus(
            "#dialogue: d\n\
             A\tREJECT\tno way\n\
             B\tREJECT\tno thanks\n\
             A\tREJECT\toh no\n\
             B\tACCEPT\tno problem\n",
        )
        .unwrap();
        // first three wrong, fourth currently right
        for (i, utt) in corpus.dialogues[0].utterances.iter_mut().enumerate() {
            utt.working_tag = if i == 3 { tag("ACCEPT") } else { tag("SUGGEST") };
        }
        let rule = Rule::new(vec![Condition::ContainsCue("no".into())], tag("REJECT")).unwrap();
        assert_eq!(improvement_score(&rule, &corpus, None).unwrap(), 2.0);

        let weights = vec![2.0, 2.0, 2.0, 1.0];
        assert_eq!(improvement_score(&rule, &corpus, Some(&weights)).unwrap(), 5.0);

        // breaking every correct tag
        let mut all_right = corpus.clone();
        for utt in &mut all_right.dialogues[0].utterances {
            utt.working_tag = utt.gold_tag.clone();
        }
        let breaker = Rule::unconditional(tag("SUGGEST")).unwrap();
        assert_eq!(improvement_score(&breaker, &all_right, None).unwrap(), -4.0);

        // an identity rule scores zero
        let mut all_reject = corpus.clone();
        for utt in &mut all_reject.dialogues[0].utterances {
            utt.working_tag = tag("REJECT");
        }
        let identity = Rule::unconditional(tag("REJECT")).unwrap();
        assert_eq!(improvement_score(&identity, &all_reject, None).unwrap(), 0.0);
    }

    /// Hand-enumerated instantiation set for a one-token utterance with a
    /// SUGGEST predecessor, under the full default template set.
    #[test]
    fn instantiate_all_enumerates_bindings() {
        let mut corpus = parse_corpus(
            "#dialogue: d\nA\tSUGGEST\thello there\nB\tREJECT\tno\n",
        )
        .unwrap();
        corpus.dialogues[0].utterances[0].working_tag = tag("SUGGEST");
        let cues = all_ngrams(&corpus);
        let templates = TemplateSet::default_set();
        let rules = instantiate_all(&corpus, &templates, &cues, 0, 1).unwrap();
        let got: Vec<String> = rules.iter().map(Rule::to_string).collect();
        let expected = vec![
            "IF * THEN REJECT",
            "IF contains(\"no\") AND tag[+1]=? THEN REJECT",
            "IF contains(\"no\") AND tag[-1]=SUGGEST THEN REJECT",
            "IF contains(\"no\") THEN REJECT",
            "IF length<2 AND tag[-1]=SUGGEST THEN REJECT",
            "IF length<3 AND tag[-1]=SUGGEST THEN REJECT",
            "IF length<4 AND tag[-1]=SUGGEST THEN REJECT",
            "IF length<5 AND tag[-1]=SUGGEST THEN REJECT",
            "IF speaker_change=true AND tag[-1]=SUGGEST THEN REJECT",
            "IF speaker_change=true THEN REJECT",
            "IF tag[-1]=SUGGEST AND tag[-2]=? THEN REJECT",
            "IF tag[-1]=SUGGEST THEN REJECT",
            "IF utterance=\"no\" THEN REJECT",
        ];
        assert_eq!(got, expected);
        // every produced rule matches and corrects the utterance
        for rule in &rules {
            assert!(rule_matches(rule, &corpus, 0, 1).unwrap());
            assert_eq!(rule.new_tag(), &tag("REJECT"));
        }
    }

    #[test]
    fn instantiate_without_cues_under_cue_templates_is_empty() {
        let corpus = parse_corpus("#dialogue: d\nA\tREJECT\tno\n").unwrap();
        let templates = TemplateSet::subset(&["T1", "T2", "T10"]).unwrap();
        let rules = instantiate_all(&corpus, &templates, &CueSet::empty(), 0, 0).unwrap();
        assert!(rules.is_empty());
    }

    #[test]
    fn train_single_tag_corpus_yields_one_unconditional_rule() {
        let mut corpus = parse_corpus(
            "#dialogue: d\nA\tSUGGEST\thello\nB\tSUGGEST\tmonday\nA\tSUGGEST\tyes\n",
        )
        .unwrap();
        let cues = all_ngrams(&corpus);
        let report = train_exhaustive(
            &mut corpus,
            &TemplateSet::default_set(),
            &cues,
            &TrainingConfig::default(),
        )
        .unwrap();
        assert_eq!(report.model().rules().len(), 1);
        assert_eq!(report.model().rules()[0].to_string(), "IF * THEN SUGGEST");
        assert_eq!(report.training_accuracy(), 1.0);

        let mut single = parse_corpus("#dialogue: d\nA\tGREET\thi\n").unwrap();
        let cues = all_ngrams(&single);
        let report = train_exhaustive(
            &mut single,
            &TemplateSet::default_set(),
            &cues,
            &TrainingConfig::default(),
        )
        .unwrap();
        assert_eq!(report.passes()[0].score, 1.0);
        assert_eq!(report.training_accuracy(), 1.0);
    }

    fn crafted_corpus() -> Corpus {
        parse_corpus(
            "#dialogue: d1\n\
             A\tSUGGEST\thow about monday\n\
             B\tSUGGEST\tmaybe tuesday then\n\
             A\tREJECT\tno\n\
             B\tSUGGEST\twednesday could work\n\
             B\tSUGGEST\tor thursday even\n\
             A\tREJECT\tno thanks\n\
             B\tSUGGEST\tfriday morning maybe\n\
             A\tSUGGEST\tearly friday morning\n\
             B\tSUGGEST\tfine friday it is\n\
             #dialogue: d2\n\
             A\tREJECT\tno\n\
             B\tSUGGEST\tmonday again then\n\
             A\tREJECT\tno\n",
        )
        .unwrap()
    }

    /// Majority-SUGGEST corpus with "no"-marked REJECTs: greedy training
    /// learns the unconditional rule, then the bare cue rule.
    #[test]
    fn train_crafted_corpus_learns_expected_rules() {
        let mut corpus = crafted_corpus();
        let cues = all_ngrams(&corpus);
        let report = train_exhaustive(
            &mut corpus,
            &TemplateSet::default_set(),
            &cues,
            &TrainingConfig::default(),
        )
        .unwrap();
        let got: Vec<String> = report.model().rules().iter().map(Rule::to_string).collect();
        assert_eq!(
            got,
            vec!["IF * THEN SUGGEST", "IF contains(\"no\") THEN REJECT"],
        );
        assert_eq!(report.passes()[0].score, 8.0);
        assert_eq!(report.passes()[1].score, 4.0);
        assert_eq!(report.training_accuracy(), 1.0);
    }

    #[test]
    fn monte_carlo_with_full_coverage_equals_exhaustive() {
        let mut a = crafted_corpus();
        let mut b = crafted_corpus();
        let cues = all_ngrams(&a);
        let templates = TemplateSet::default_set();
        let exhaustive =
            train_exhaustive(&mut a, &templates, &cues, &TrainingConfig::default()).unwrap();
        let config = TrainingConfig { r_sample: 100_000, seed: 7, ..TrainingConfig::default() };
        let monte = train_monte_carlo(&mut b, &templates, &cues, &config).unwrap();
        assert_eq!(monte.model().rules(), exhaustive.model().rules());
        let mc_scores: Vec<f64> = monte.passes().iter().map(|p| p.score).collect();
        let ex_scores: Vec<f64> = exhaustive.passes().iter().map(|p| p.score).collect();
        assert_eq!(mc_scores, ex_scores);
    }

    #[test]
    fn monte_carlo_is_reproducible_and_r1_still_corrects() {
        let mut single = parse_corpus("#dialogue: d\nA\tGREET\thi\n").unwrap();
        let cues = all_ngrams(&single);
        let templates = TemplateSet::default_set();
        let config = TrainingConfig { r_sample: 1, seed: 3, ..TrainingConfig::default() };
        let report = train_monte_carlo(&mut single, &templates, &cues, &config).unwrap();
        assert_eq!(report.training_accuracy(), 1.0);

        let mut c1 = crafted_corpus();
        let mut c2 = crafted_corpus();
        let cues = all_ngrams(&c1);
        let config = TrainingConfig { r_sample: 3, seed: 42, ..TrainingConfig::default() };
        let m1 = train_monte_carlo(&mut c1, &templates, &cues, &config).unwrap();
        let m2 = train_monte_carlo(&mut c2, &templates, &cues, &config).unwrap();
        assert_eq!(m1.model().to_text(), m2.model().to_text());
    }

    #[test]
    fn model_file_roundtrip() {
        let model = five_rule_model();
        let text = model.to_text();
        let parsed = Model::parse(&text).unwrap();
        assert_eq!(parsed, model);
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn template_subset_by_id() {
        let sub = TemplateSet::subset(&["T9", "T1", "T3", "T2"]).unwrap();
        assert_eq!(sub.id(), "T1+T2+T3+T9");
        assert_eq!(sub.templates().len(), 4);
        assert!(TemplateSet::subset(&["T0"]).is_err());
        assert_eq!(TemplateSet::default_set().max_offset(), 2);
    }

    #[test]
    fn window_must_cover_template_offsets() {
        let mut corpus = crafted_corpus();
        let cues = all_ngrams(&corpus);
        let config = TrainingConfig { window: 1, ..TrainingConfig::default() };
        let err =
            train_exhaustive(&mut corpus, &TemplateSet::default_set(), &cues, &config).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }
}
