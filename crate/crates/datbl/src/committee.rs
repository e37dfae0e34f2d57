//! Committees of diversified models with agreement-based confidence.
//!
//! Members are trained in sequence; before each new member, the training
//! weight of every utterance the previous member got wrong is multiplied by
//! `beta` and the weights are renormalized. At tagging time each member
//! votes independently and a tag's confidence is the fraction of members
//! agreeing on it.

use std::collections::BTreeSet;

use crate::corpus::{Corpus, Tag};
use crate::cues::CueSet;
use crate::tbl::{tag_corpus, train_monte_carlo, Model, TemplateSet, TrainReport, TrainingConfig};
use crate::{Error, Result};

/// K independently trained models plus their reweighting factor and seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Committee {
    members: Vec<Model>,
    beta: f64,
    seeds: Vec<u64>,
}

impl Committee {
    pub fn new(members: Vec<Model>, beta: f64, seeds: Vec<u64>) -> Result<Committee> {
        if members.len() < 2 {
            return Err(Error::Invalid(format!(
                "a committee needs at least 2 members, got {}",
                members.len()
            )));
        }
        if members.len() != seeds.len() {
            return Err(Error::Invalid(format!(
                "{} members but {} seeds",
                members.len(),
                seeds.len()
            )));
        }
        if beta.is_nan() || beta <= 1.0 {
            return Err(Error::Invalid(format!("beta must exceed 1, got {beta}")));
        }
        Ok(Committee { members, beta, seeds })
    }

    pub fn members(&self) -> &[Model] {
        &self.members
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }
}

/// A committee manifest: beta, per-member seeds, and one member-model file
/// path per line (relative to the manifest's own location).
#[derive(Clone, Debug, PartialEq)]
pub struct CommitteeManifest {
    pub beta: f64,
    pub seeds: Vec<u64>,
    pub member_paths: Vec<String>,
}

impl CommitteeManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("#beta {}\n", self.beta));
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        out.push_str(&format!("#seeds {}\n", seeds.join(" ")));
        for path in &self.member_paths {
            out.push_str(path);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<CommitteeManifest> {
        let mut beta = None;
        let mut seeds = None;
        let mut member_paths = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            if let Some(value) = line.strip_prefix("#beta ") {
                beta = Some(value.parse::<f64>().map_err(|_| parse_err(format!("bad beta {value:?}")))?);
            } else if let Some(value) = line.strip_prefix("#seeds ") {
                seeds = Some(
                    value
                        .split_whitespace()
                        .map(|s| s.parse::<u64>().map_err(|_| parse_err(format!("bad seed {s:?}"))))
                        .collect::<Result<Vec<u64>>>()?,
                );
            } else if line.starts_with('#') {
                return Err(parse_err(format!("unknown header {line:?}")));
            } else {
                member_paths.push(line.to_string());
            }
        }
        let manifest = CommitteeManifest {
            beta: beta.ok_or_else(|| Error::Invalid("manifest is missing #beta".into()))?,
            seeds: seeds.ok_or_else(|| Error::Invalid("manifest is missing #seeds".into()))?,
            member_paths,
        };
        if manifest.member_paths.len() != manifest.seeds.len() {
            return Err(Error::Invalid(format!(
                "{} member paths but {} seeds",
                manifest.member_paths.len(),
                manifest.seeds.len()
            )));
        }
        Ok(manifest)
    }
}

/// One utterance's committee output: the modal tag, the agreeing fraction,
/// and every member's vote in training order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidentTag {
    pub tag: Tag,
    pub confidence: f64,
    pub votes: Vec<Tag>,
}

/// Trains `k` Monte Carlo members with boosting-style reweighting.
///
/// Member `i` runs with seed `config.seed + i`. After each member, weights
/// of its training errors are multiplied by `beta`, then all weights are
/// renormalized to sum to the utterance count; errors compound across
/// rounds. Returns the committee and the per-member training reports.
pub fn train_committee(
    corpus: &mut Corpus,
    templates: &TemplateSet,
    cues: &CueSet,
    config: &TrainingConfig,
    k: usize,
    beta: f64,
) -> Result<(Committee, Vec<TrainReport>)> {
    if k < 2 {
        return Err(Error::Invalid(format!("a committee needs at least 2 members, got {k}")));
    }
    if beta.is_nan() || beta <= 1.0 {
        return Err(Error::Invalid(format!("beta must exceed 1, got {beta}")));
    }
    let n = corpus.utterance_count();
    let mut weights = match &config.weights {
        Some(w) => w.clone(),
        None => vec![1.0; n],
    };

    let mut members = Vec::with_capacity(k);
    let mut seeds = Vec::with_capacity(k);
    let mut reports = Vec::with_capacity(k);
    for i in 0..k {
        let member_config = TrainingConfig {
            seed: config.seed + i as u64,
            weights: Some(weights.clone()),
            ..config.clone()
        };
        let report = train_monte_carlo(corpus, templates, cues, &member_config)?;
        seeds.push(member_config.seed);

        // training left the corpus carrying this member's training tags
        for (flat, (_, _, utt)) in corpus.iter_utterances().enumerate() {
            if !utt.gold_tag.is_none() && utt.working_tag != utt.gold_tag {
                weights[flat] *= beta;
            }
        }
        let sum: f64 = weights.iter().sum();
        let scale = n as f64 / sum;
        for w in &mut weights {
            *w *= scale;
        }

        members.push(report.model().clone());
        reports.push(report);
    }
    Ok((Committee::new(members, beta, seeds)?, reports))
}

/// Tags the corpus with every member and reduces the votes per utterance,
/// in flat corpus order. Vote ties go to the tag of the earliest-trained
/// member among the tied tags.
pub fn tag_with_confidence(committee: &Committee, corpus: &Corpus) -> Vec<ConfidentTag> {
    let k = committee.k();
    let tagged: Vec<Corpus> =
        committee.members().iter().map(|m| tag_corpus(m, corpus)).collect();

    let mut out = Vec::with_capacity(corpus.utterance_count());
    let mut flats: Vec<Vec<&Tag>> = Vec::new();
    for member_corpus in &tagged {
        for (i, (_, _, utt)) in member_corpus.iter_utterances().enumerate() {
            if flats.len() <= i {
                flats.push(Vec::with_capacity(k));
            }
            flats[i].push(&utt.working_tag);
        }
    }
    for votes in flats {
        // (tag, count, earliest member index), in first-vote order
        let mut tally: Vec<(&Tag, usize, usize)> = Vec::new();
        for (member, &vote) in votes.iter().enumerate() {
            match tally.iter_mut().find(|(t, _, _)| *t == vote) {
                Some((_, count, _)) => *count += 1,
                None => tally.push((vote, 1, member)),
            }
        }
        let &(winner, count, _) = tally
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
            .expect("at least one vote");
        out.push(ConfidentTag {
            tag: winner.clone(),
            confidence: count as f64 / k as f64,
            votes: votes.into_iter().cloned().collect(),
        });
    }
    out
}

/// The confidence TSV: `dialogue<TAB>index<TAB>tag<TAB>confidence<TAB>votes`.
pub fn confidence_tsv(corpus: &Corpus, tags: &[ConfidentTag]) -> String {
    let mut out = String::new();
    let mut rows = tags.iter();
    for dlg in &corpus.dialogues {
        for utt in &dlg.utterances {
            let Some(conf) = rows.next() else { return out };
            let votes: Vec<String> = conf.votes.iter().map(Tag::to_string).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\t{}\n",
                dlg.id,
                utt.index_in_dialogue,
                conf.tag,
                conf.confidence,
                votes.join(",")
            ));
        }
    }
    out
}

/// The distinct tags a committee's rules can ever assign.
pub fn committee_tag_inventory(committee: &Committee) -> BTreeSet<Tag> {
    committee
        .members()
        .iter()
        .flat_map(|m| m.rules().iter().map(|r| r.new_tag().clone()))
        .collect()
}
