//! Training internals: a flat, feature-precomputed view of a corpus'
//! working tags, candidate instantiation, and the greedy selection loop.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{change_of_speaker, ngrams_up_to, whole_utterance, Corpus, Dialogue, Tag};
use crate::cues::CueSet;
use crate::{Error, Result};

use super::{
    canonical_rule_string, Condition, ConditionSchema, PassStat, Rule, TemplateSet, TrainMode,
    TrainingConfig,
};

static NONE_TAG: Tag = Tag::NONE;

/// Per-utterance features that rule conditions read. Tokens never change
/// during training, so these are computed once.
pub(crate) struct Features {
    pub ngrams: BTreeSet<String>,
    pub len: usize,
    pub change_of_speaker: bool,
    pub punct: BTreeSet<char>,
    pub whole: Option<String>,
}

pub(crate) fn features_of(dlg: &Dialogue, utt_idx: usize) -> Features {
    let utt = &dlg.utterances[utt_idx];
    Features {
        ngrams: ngrams_up_to(&utt.tokens, 3),
        len: utt.tokens.len(),
        change_of_speaker: change_of_speaker(dlg, utt_idx),
        punct: utt.punctuation.clone(),
        whole: whole_utterance(&utt.tokens),
    }
}

/// A corpus flattened for training: features, gold/working tags, weights,
/// and dialogue boundaries, all indexed by flat utterance position.
pub(crate) struct Workbench {
    feats: Vec<Features>,
    cues_present: Vec<Vec<String>>,
    gold: Vec<Tag>,
    work: Vec<Tag>,
    weights: Vec<f64>,
    dlg_start: Vec<usize>,
    dlg_len: Vec<usize>,
    dlg_of: Vec<usize>,
    pos_of: Vec<usize>,
}

impl Workbench {
    pub fn build(corpus: &Corpus, cues: &CueSet, weights: Option<&[f64]>) -> Result<Workbench> {
        let n = corpus.utterance_count();
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::Invalid(format!(
                        "{} weights for {} utterances",
                        w.len(),
                        n
                    )));
                }
                if !w.iter().all(|x| x.is_finite() && *x > 0.0) {
                    return Err(Error::Invalid("weights must be positive and finite".into()));
                }
                w.to_vec()
            }
            None => vec![1.0; n],
        };

        let mut wb = Workbench {
            feats: Vec::with_capacity(n),
            cues_present: Vec::with_capacity(n),
            gold: Vec::with_capacity(n),
            work: Vec::with_capacity(n),
            weights,
            dlg_start: Vec::with_capacity(corpus.dialogues.len()),
            dlg_len: Vec::with_capacity(corpus.dialogues.len()),
            dlg_of: Vec::with_capacity(n),
            pos_of: Vec::with_capacity(n),
        };
        for (d, dlg) in corpus.dialogues.iter().enumerate() {
            wb.dlg_start.push(wb.feats.len());
            wb.dlg_len.push(dlg.utterances.len());
            for (u, utt) in dlg.utterances.iter().enumerate() {
                let feats = features_of(dlg, u);
                // BTreeSet iteration keeps this list sorted and deterministic
                let present: Vec<String> = feats
                    .ngrams
                    .iter()
                    .filter(|g| cues.contains(g))
                    .cloned()
                    .collect();
                wb.cues_present.push(present);
                wb.feats.push(feats);
                wb.gold.push(utt.gold_tag.clone());
                wb.work.push(utt.working_tag.clone());
                wb.dlg_of.push(d);
                wb.pos_of.push(u);
            }
        }
        Ok(wb)
    }

    pub fn len(&self) -> usize {
        self.feats.len()
    }

    pub fn flat_index(&self, dialogue_idx: usize, utt_idx: usize) -> Result<usize> {
        if dialogue_idx >= self.dlg_start.len() {
            return Err(Error::OutOfRange(format!("dialogue index {dialogue_idx}")));
        }
        if utt_idx >= self.dlg_len[dialogue_idx] {
            return Err(Error::OutOfRange(format!("utterance index {utt_idx}")));
        }
        Ok(self.dlg_start[dialogue_idx] + utt_idx)
    }

    fn tag_at(&self, flat: usize, offset: i32) -> &Tag {
        let dlg = self.dlg_of[flat];
        let pos = self.pos_of[flat] as i64 + i64::from(offset);
        if pos < 0 || pos >= self.dlg_len[dlg] as i64 {
            &NONE_TAG
        } else {
            &self.work[self.dlg_start[dlg] + pos as usize]
        }
    }

    pub fn matches(&self, conditions: &[Condition], flat: usize) -> bool {
        let feats = &self.feats[flat];
        conditions.iter().all(|c| c.holds(feats, |off| self.tag_at(flat, off)))
    }

    /// Weighted improvement of a hypothetical simultaneous application.
    pub fn score(&self, conditions: &[Condition], new_tag: &Tag) -> f64 {
        let mut total = 0.0;
        for flat in 0..self.len() {
            let gold = &self.gold[flat];
            if gold.is_none() || !self.matches(conditions, flat) {
                continue;
            }
            let before = self.work[flat] == *gold;
            let after = new_tag == gold;
            if before != after {
                total += if after { self.weights[flat] } else { -self.weights[flat] };
            }
        }
        total
    }

    /// Applies a rule with snapshot semantics: all matches are decided
    /// against the current tags before any tag is written.
    pub fn apply(&mut self, conditions: &[Condition], new_tag: &Tag) -> usize {
        let matched: Vec<usize> =
            (0..self.len()).filter(|&flat| self.matches(conditions, flat)).collect();
        let mut changed = 0;
        for flat in matched {
            if self.work[flat] != *new_tag {
                self.work[flat] = new_tag.clone();
                changed += 1;
            }
        }
        changed
    }

    pub fn write_back(&self, corpus: &mut Corpus) {
        let mut flat = 0;
        for dlg in &mut corpus.dialogues {
            for utt in &mut dlg.utterances {
                utt.working_tag = self.work[flat].clone();
                flat += 1;
            }
        }
    }

    /// Unweighted training accuracy over gold-tagged utterances; vacuously
    /// 1.0 when there are none.
    pub fn accuracy(&self) -> f64 {
        let mut correct = 0usize;
        let mut total = 0usize;
        for flat in 0..self.len() {
            if self.gold[flat].is_none() {
                continue;
            }
            total += 1;
            if self.work[flat] == self.gold[flat] {
                correct += 1;
            }
        }
        if total == 0 {
            1.0
        } else {
            correct as f64 / total as f64
        }
    }

    fn mistagged(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&f| !self.gold[f].is_none() && self.work[f] != self.gold[f])
            .collect()
    }

    fn binding_count(&self, schema: &ConditionSchema, flat: usize) -> usize {
        match schema {
            ConditionSchema::Cue => self.cues_present[flat].len(),
            ConditionSchema::TagAt(_) => 1,
            ConditionSchema::LengthLessThan(bounds) => {
                bounds.iter().filter(|&&n| self.feats[flat].len < n).count()
            }
            ConditionSchema::SpeakerChange => 1,
            ConditionSchema::Punctuation => self.feats[flat].punct.len(),
            ConditionSchema::WholeUtterance => usize::from(self.feats[flat].whole.is_some()),
        }
    }

    fn binding_at(&self, schema: &ConditionSchema, flat: usize, idx: usize) -> Condition {
        match schema {
            ConditionSchema::Cue => Condition::ContainsCue(self.cues_present[flat][idx].clone()),
            ConditionSchema::TagAt(offset) => Condition::TagAtOffset {
                offset: *offset,
                tag: self.tag_at(flat, *offset).clone(),
            },
            ConditionSchema::LengthLessThan(bounds) => Condition::LengthLessThan(
                *bounds
                    .iter()
                    .filter(|&&n| self.feats[flat].len < n)
                    .nth(idx)
                    .expect("binding index in range"),
            ),
            ConditionSchema::SpeakerChange => {
                Condition::ChangeOfSpeakerIs(self.feats[flat].change_of_speaker)
            }
            ConditionSchema::Punctuation => Condition::PunctuationContains(
                *self.feats[flat].punct.iter().nth(idx).expect("binding index in range"),
            ),
            ConditionSchema::WholeUtterance => Condition::WholeUtteranceIs(
                self.feats[flat].whole.clone().expect("whole utterance present"),
            ),
        }
    }

    /// The number of distinct template instantiations at this utterance.
    pub fn pool_size(&self, templates: &TemplateSet, flat: usize) -> usize {
        if self.gold[flat].is_none() {
            return 0;
        }
        templates
            .templates()
            .iter()
            .map(|t| t.schema.iter().map(|s| self.binding_count(s, flat)).product::<usize>())
            .sum()
    }

    /// Every rule obtainable at this utterance: the cartesian product of
    /// realized bindings per template, with the gold tag as replacement.
    pub fn instantiate(&self, templates: &TemplateSet, flat: usize) -> Vec<(Vec<Condition>, Tag)> {
        let gold = &self.gold[flat];
        if gold.is_none() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for template in templates.templates() {
            let counts: Vec<usize> =
                template.schema.iter().map(|s| self.binding_count(s, flat)).collect();
            if counts.contains(&0) {
                continue;
            }
            let mut idx = vec![0usize; counts.len()];
            loop {
                let conds: Vec<Condition> = template
                    .schema
                    .iter()
                    .zip(&idx)
                    .map(|(s, &i)| self.binding_at(s, flat, i))
                    .collect();
                out.push((conds, gold.clone()));
                // odometer increment; done when it wraps past the last slot
                let mut k = counts.len();
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < counts[k] {
                        break;
                    }
                    idx[k] = 0;
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if counts.is_empty() || k == usize::MAX {
                    break;
                }
            }
        }
        out
    }

    /// Draws `r` instantiations: template uniform over the set, then each
    /// slot uniform over its realized values. Draws landing on a template
    /// with an unbindable slot produce nothing.
    pub fn sample(
        &self,
        templates: &TemplateSet,
        flat: usize,
        r: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(Vec<Condition>, Tag)> {
        let gold = &self.gold[flat];
        if gold.is_none() {
            return Vec::new();
        }
        let mut out = Vec::new();
        'draws: for _ in 0..r {
            let template = &templates.templates()[rng.gen_range(0..templates.templates().len())];
            let mut conds = Vec::with_capacity(template.schema.len());
            for schema in &template.schema {
                let count = self.binding_count(schema, flat);
                if count == 0 {
                    continue 'draws;
                }
                conds.push(self.binding_at(schema, flat, rng.gen_range(0..count)));
            }
            out.push((conds, gold.clone()));
        }
        out
    }
}

/// The greedy pass loop shared by both trainers.
pub(crate) fn train_loop(
    wb: &mut Workbench,
    templates: &TemplateSet,
    config: &TrainingConfig,
    mode: TrainMode,
) -> Result<(Vec<Rule>, Vec<PassStat>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rules = Vec::new();
    let mut passes = Vec::new();

    while rules.len() < config.max_rules {
        let mistagged = wb.mistagged();
        if mistagged.is_empty() {
            break;
        }

        let mut seen: HashSet<String> = HashSet::new();
        let mut candidates: Vec<(Vec<Condition>, Tag, String)> = Vec::new();
        for &flat in &mistagged {
            let items = match mode {
                TrainMode::Exhaustive => wb.instantiate(templates, flat),
                TrainMode::MonteCarlo => {
                    // a sample covering the whole pool is the pool itself
                    if config.r_sample >= wb.pool_size(templates, flat) {
                        wb.instantiate(templates, flat)
                    } else {
                        wb.sample(templates, flat, config.r_sample, &mut rng)
                    }
                }
            };
            for (conds, tag) in items {
                let canon = canonical_rule_string(&conds, &tag);
                if seen.insert(canon.clone()) {
                    candidates.push((conds, tag, canon));
                }
            }
        }
        if candidates.is_empty() {
            break;
        }

        let mut best: Option<(f64, usize)> = None;
        for (i, (conds, tag, canon)) in candidates.iter().enumerate() {
            let score = wb.score(conds, tag);
            let better = match best {
                None => true,
                Some((best_score, best_idx)) => {
                    score > best_score
                        || (score == best_score && *canon < candidates[best_idx].2)
                }
            };
            if better {
                best = Some((score, i));
            }
        }
        let (score, idx) = best.expect("candidates are non-empty");
        if score < config.theta {
            break;
        }
        let (conds, tag, _) = candidates.swap_remove(idx);
        let changed = wb.apply(&conds, &tag);
        rules.push(Rule::new(conds, tag)?);
        passes.push(PassStat { score, changed });
    }
    Ok((rules, passes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;
    use crate::cues::{substring_source, CueConfig, SubstringMode};

    #[test]
    fn pool_size_matches_enumeration() {
        let mut corpus = parse_corpus(
            "#dialogue: d\nA\tSUGGEST\thello there you\nB\tREJECT\tno no way ok ok\nA\tBYE\tsee you !\n",
        )
        .unwrap();
        corpus.dialogues[0].utterances[0].working_tag = Tag::new("SUGGEST").unwrap();
        let config = CueConfig { mode: SubstringMode::AllNgrams, ..CueConfig::default() };
        let cues = substring_source(&corpus, &config, None).unwrap();
        let wb = Workbench::build(&corpus, &cues, None).unwrap();
        let templates = TemplateSet::default_set();
        for flat in 0..wb.len() {
            let enumerated = wb.instantiate(&templates, flat);
            assert_eq!(wb.pool_size(&templates, flat), enumerated.len(), "at {flat}");
            // enumerated rules must all match their generator utterance
            for (conds, _) in &enumerated {
                assert!(wb.matches(conds, flat));
            }
        }
    }

    #[test]
    fn sampling_draws_only_realized_bindings() {
        let corpus = parse_corpus("#dialogue: d\nA\tREJECT\tno way .\n").unwrap();
        let config = CueConfig { mode: SubstringMode::AllNgrams, ..CueConfig::default() };
        let cues = substring_source(&corpus, &config, None).unwrap();
        let wb = Workbench::build(&corpus, &cues, None).unwrap();
        let templates = TemplateSet::default_set();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (conds, tag) in wb.sample(&templates, 0, 200, &mut rng) {
            assert!(wb.matches(&conds, 0), "sampled rule must match its utterance");
            assert_eq!(tag, Tag::new("REJECT").unwrap());
        }
    }
}
