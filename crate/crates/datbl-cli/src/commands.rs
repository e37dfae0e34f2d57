//! Command implementations: thin serial orchestration over the library.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use datbl::committee::{
    committee_tag_inventory, confidence_tsv, tag_with_confidence, train_committee, Committee,
    CommitteeManifest,
};
use datbl::corpus::{
    apply_clusters, parse_corpus, serialize_corpus, tokenize, ClusterMap, Corpus, Tag, TagColumn,
};
use datbl::cues::{
    parse_cue_list, resolve_theta1, substring_source, CueConfig, CueSet, SubstringMode,
};
use datbl::eval::synth::{generate, scheduling_spec};
use datbl::eval::{evaluate as evaluate_corpora, run_trials, t_test, TrialSetup, TrialStats};
use datbl::tbl::{
    tag_corpus, train_exhaustive, train_monte_carlo, Model, TemplateSet, TrainReport,
    TrainingConfig,
};

use crate::config::{pick, pick_opt, RunConfig};
use crate::error::{read_file, write_file, CliError};
use crate::{
    CommitteeTrainArgs, CompareArgs, CueFlags, EvaluateArgs, ExtractCuesArgs, GenCorpusArgs,
    TagArgs, TrainArgs, TrainFlags,
};

pub struct Ctx {
    pub config: RunConfig,
    pub out_dir: Option<PathBuf>,
    pub verbose: u8,
}

impl Ctx {
    fn out_dir(&self) -> PathBuf {
        pick(self.out_dir.clone(), self.config.out_dir.clone(), PathBuf::from("."))
    }

    fn out_path(&self, flag: Option<PathBuf>, default_name: &str) -> PathBuf {
        flag.unwrap_or_else(|| self.out_dir().join(default_name))
    }

    fn training_config(&self, flags: &TrainFlags) -> TrainingConfig {
        let defaults = TrainingConfig::default();
        TrainingConfig {
            theta: pick(flags.theta, self.config.theta, defaults.theta),
            r_sample: pick(flags.r_sample, self.config.r_sample, defaults.r_sample),
            max_rules: pick(flags.max_rules, self.config.max_rules, defaults.max_rules),
            seed: pick(flags.seed, self.config.seed, defaults.seed),
            weights: None,
            window: pick(flags.window, self.config.window, defaults.window),
        }
    }

    fn cue_config(&self, flags: &CueFlags) -> Result<CueConfig, CliError> {
        let defaults = CueConfig::default();
        let mode_name = pick(
            flags.mode.clone(),
            self.config.mode.clone(),
            defaults.mode.to_string(),
        );
        let mode: SubstringMode = mode_name.parse().map_err(CliError::from)?;
        Ok(CueConfig {
            theta1: pick_opt(flags.theta1, self.config.theta1),
            theta2: pick(flags.theta2, self.config.theta2, defaults.theta2),
            max_len: pick(flags.max_len, self.config.max_len, defaults.max_len),
            mode,
        })
    }

    fn templates(&self, flags: &TrainFlags) -> Result<TemplateSet, CliError> {
        let spec = pick(
            flags.templates.clone(),
            self.config.templates.clone(),
            "default".to_string(),
        );
        parse_templates(&spec)
    }

    fn exhaustive(&self, flags: &TrainFlags) -> bool {
        flags.exhaustive || self.config.exhaustive.unwrap_or(false)
    }
}

fn parse_templates(spec: &str) -> Result<TemplateSet, CliError> {
    if spec == "default" {
        return Ok(TemplateSet::default_set());
    }
    let ids: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    TemplateSet::subset(&ids).map_err(CliError::from)
}

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::Domain(format!("no {what} given (flag or config file)")))
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    parse_corpus(&read_file(path)?)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_clusters(path: &Path) -> Result<ClusterMap, CliError> {
    ClusterMap::parse(&read_file(path)?)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_cues(path: &Path) -> Result<CueSet, CliError> {
    CueSet::from_tsv(&read_file(path)?)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

/// Applies the cluster map when one is configured.
fn maybe_cluster(
    corpus: Corpus,
    flag: &Option<PathBuf>,
    config: &RunConfig,
) -> Result<Corpus, CliError> {
    match pick_opt(flag.clone(), config.clusters.clone()) {
        Some(path) => Ok(apply_clusters(&corpus, &load_clusters(&path)?)),
        None => Ok(corpus),
    }
}

pub fn gen_corpus(ctx: &Ctx, args: GenCorpusArgs) -> Result<(), CliError> {
    let spec = match args.preset.as_str() {
        "scheduling" => scheduling_spec(
            args.dialogues.unwrap_or(35),
            args.noise.unwrap_or(0.0),
        ),
        other => {
            return Err(CliError::Domain(format!(
                "unknown preset {other:?} (available: scheduling)"
            )))
        }
    };
    let seed = pick(args.seed, ctx.config.seed, 0);
    let corpus = generate(&spec, seed)?;
    let out = ctx.out_path(args.out, "synthetic.corpus");
    write_file(&out, &serialize_corpus(&corpus, TagColumn::Gold))?;
    println!(
        "wrote {} dialogues / {} utterances to {}",
        corpus.dialogues.len(),
        corpus.utterance_count(),
        out.display()
    );
    Ok(())
}

pub fn extract_cues(ctx: &Ctx, args: ExtractCuesArgs) -> Result<(), CliError> {
    let train_path = require(pick_opt(args.train, ctx.config.train.clone()), "train corpus")?;
    let cue_config = ctx.cue_config(&args.cues)?;

    let mut corpus = load_corpus(&train_path)?;
    if cue_config.mode.uses_clusters() {
        let clusters_path = require(
            pick_opt(args.clusters, ctx.config.clusters.clone()),
            "cluster map (the selected mode clusters the corpus)",
        )?;
        corpus = apply_clusters(&corpus, &load_clusters(&clusters_path)?);
    }
    let external = match cue_config.mode {
        SubstringMode::ExternalList => {
            let list_path = require(
                pick_opt(args.cue_list, ctx.config.cue_list.clone()),
                "cue-phrase list (external-list mode)",
            )?;
            Some(parse_cue_list(&read_file(&list_path)?))
        }
        _ => None,
    };

    let cues = substring_source(&corpus, &cue_config, external.as_deref())?;
    let out = ctx.out_path(args.out, "cues.tsv");
    write_file(&out, &cues.to_tsv())?;

    match cue_config.mode {
        SubstringMode::Entropy
        | SubstringMode::EntropyFilter
        | SubstringMode::EntropyCluster
        | SubstringMode::EntropyFilterCluster => {
            let theta1 = resolve_theta1(&corpus, &cue_config)?;
            println!(
                "mode {}: {} cues (theta1 = {:.4} bits, theta2 = {}) -> {}",
                cue_config.mode,
                cues.len(),
                theta1,
                cue_config.theta2,
                out.display()
            );
        }
        _ => println!("mode {}: {} substrings -> {}", cue_config.mode, cues.len(), out.display()),
    }
    Ok(())
}

/// Warns when cue substrings are not fixed points of the corpus tokenizer.
fn warn_tokenization_mismatch(cues: &CueSet) {
    let mismatched: Vec<&str> = cues
        .cues()
        .iter()
        .map(|c| c.substring.as_str())
        .filter(|s| tokenize(s).0.join(" ") != **s)
        .collect();
    if !mismatched.is_empty() {
        eprintln!(
            "warning: {} cue(s) do not match the corpus tokenization, e.g. {:?}",
            mismatched.len(),
            mismatched[0]
        );
    }
}

fn run_training(
    corpus: &mut Corpus,
    templates: &TemplateSet,
    cues: &CueSet,
    config: &TrainingConfig,
    exhaustive: bool,
) -> Result<TrainReport, CliError> {
    if exhaustive {
        train_exhaustive(corpus, templates, cues, config).map_err(CliError::from)
    } else {
        train_monte_carlo(corpus, templates, cues, config).map_err(CliError::from)
    }
}

fn print_rule_table(report: &TrainReport) {
    println!("#\tscore\tchanged\trule");
    for (i, (rule, pass)) in report.model().rules().iter().zip(report.passes()).enumerate() {
        println!("{}\t{}\t{}\t{}", i + 1, pass.score, pass.changed, rule);
    }
    println!("training accuracy: {:.4}", report.training_accuracy());
}

pub fn train(ctx: &Ctx, args: TrainArgs) -> Result<(), CliError> {
    let train_path = require(pick_opt(args.train, ctx.config.train.clone()), "train corpus")?;
    let cues_path = args.cues.unwrap_or_else(|| ctx.out_dir().join("cues.tsv"));
    let mut corpus = maybe_cluster(load_corpus(&train_path)?, &args.clusters, &ctx.config)?;
    if corpus.utterance_count() == 0 {
        return Err(CliError::Domain(format!("{} holds no utterances", train_path.display())));
    }
    let cues = load_cues(&cues_path)?;
    warn_tokenization_mismatch(&cues);

    let templates = ctx.templates(&args.flags)?;
    let config = ctx.training_config(&args.flags);
    let report = run_training(&mut corpus, &templates, &cues, &config, ctx.exhaustive(&args.flags))?;
    print_rule_table(&report);

    let out = ctx.out_path(args.out, "model.rules");
    write_file(&out, &report.model().to_text())?;
    if ctx.verbose > 0 {
        eprintln!("model written to {} (cue-set hash {})", out.display(), cues.content_hash());
    }
    Ok(())
}

/// Checks that a model never assigns a tag outside a declared tag set.
fn check_tag_inventory(assigned: &BTreeSet<Tag>, corpus: &Corpus) -> Result<(), CliError> {
    if corpus.tag_set.is_empty() {
        return Ok(());
    }
    for tag in assigned {
        if !corpus.tag_set.contains(tag) {
            return Err(CliError::Domain(format!(
                "model assigns tag {tag}, which is not in the corpus tag set"
            )));
        }
    }
    Ok(())
}

fn load_committee(manifest_path: &Path) -> Result<Committee, CliError> {
    let manifest = CommitteeManifest::parse(&read_file(manifest_path)?)
        .map_err(|e| CliError::Domain(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let members = manifest
        .member_paths
        .iter()
        .map(|p| {
            let path = base.join(p);
            Model::parse(&read_file(&path)?)
                .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<Model>, CliError>>()?;
    Committee::new(members, manifest.beta, manifest.seeds).map_err(CliError::from)
}

pub fn tag(ctx: &Ctx, args: TagArgs) -> Result<(), CliError> {
    let input_path = require(pick_opt(args.input, ctx.config.test.clone()), "input corpus")?;
    let corpus = maybe_cluster(load_corpus(&input_path)?, &args.clusters, &ctx.config)?;
    let out = ctx.out_path(args.out, "tagged.corpus");

    match (args.model, args.committee) {
        (Some(model_path), None) => {
            let model = Model::parse(&read_file(&model_path)?)
                .map_err(|e| CliError::Domain(format!("{}: {e}", model_path.display())))?;
            let assigned: BTreeSet<Tag> =
                model.rules().iter().map(|r| r.new_tag().clone()).collect();
            check_tag_inventory(&assigned, &corpus)?;
            let tagged = tag_corpus(&model, &corpus);
            write_file(&out, &serialize_corpus(&tagged, TagColumn::Working))?;
            println!("tagged {} utterances -> {}", tagged.utterance_count(), out.display());
        }
        (None, Some(manifest_path)) => {
            let committee = load_committee(&manifest_path)?;
            check_tag_inventory(&committee_tag_inventory(&committee), &corpus)?;
            let confident = tag_with_confidence(&committee, &corpus);
            let mut tagged = corpus.clone();
            let mut rows = confident.iter();
            for dlg in &mut tagged.dialogues {
                for utt in &mut dlg.utterances {
                    utt.working_tag = rows.next().expect("one vote per utterance").tag.clone();
                }
            }
            write_file(&out, &serialize_corpus(&tagged, TagColumn::Working))?;
            let conf_out = ctx.out_path(args.confidence_out, "confidence.tsv");
            write_file(&conf_out, &confidence_tsv(&corpus, &confident))?;
            println!(
                "tagged {} utterances with {} members -> {} (+ {})",
                tagged.utterance_count(),
                committee.k(),
                out.display(),
                conf_out.display()
            );
        }
        (None, None) => {
            return Err(CliError::Domain("tag needs --model or --committee".into()))
        }
        (Some(_), Some(_)) => unreachable!("clap forbids both"),
    }
    Ok(())
}

pub fn evaluate(ctx: &Ctx, args: EvaluateArgs) -> Result<(), CliError> {
    let gold_path = require(pick_opt(args.gold, ctx.config.test.clone()), "gold corpus")?;
    let tagged_path = ctx.out_path(args.tagged, "tagged.corpus");
    let gold = load_corpus(&gold_path)?;
    // the tagged file keeps predictions in its tag column
    let mut predicted = load_corpus(&tagged_path)?;
    for dlg in &mut predicted.dialogues {
        for utt in &mut dlg.utterances {
            utt.working_tag = utt.gold_tag.clone();
        }
    }
    let report = evaluate_corpora(&predicted, &gold)?;
    print!("{}", report.to_text());
    if let Some(tsv_path) = args.tsv_out {
        write_file(&tsv_path, &report.to_tsv())?;
    }
    Ok(())
}

pub fn committee_train(ctx: &Ctx, args: CommitteeTrainArgs) -> Result<(), CliError> {
    let train_path = require(pick_opt(args.train, ctx.config.train.clone()), "train corpus")?;
    let cues_path = args.cues.unwrap_or_else(|| ctx.out_dir().join("cues.tsv"));
    let mut corpus = maybe_cluster(load_corpus(&train_path)?, &args.clusters, &ctx.config)?;
    let cues = load_cues(&cues_path)?;
    warn_tokenization_mismatch(&cues);

    let k = pick(args.k, ctx.config.k, 5);
    let beta = pick(args.beta, ctx.config.beta, 2.0);
    let templates = ctx.templates(&args.flags)?;
    let config = ctx.training_config(&args.flags);
    if ctx.exhaustive(&args.flags) {
        return Err(CliError::Domain(
            "committee members train with Monte Carlo; drop --exhaustive".into(),
        ));
    }
    let (committee, reports) = train_committee(&mut corpus, &templates, &cues, &config, k, beta)?;

    let out_dir = ctx.out_dir();
    let mut member_paths = Vec::with_capacity(k);
    for (i, member) in committee.members().iter().enumerate() {
        let name = format!("member-{i}.rules");
        write_file(&out_dir.join(&name), &member.to_text())?;
        member_paths.push(name);
    }
    let manifest = CommitteeManifest {
        beta: committee.beta(),
        seeds: committee.seeds().to_vec(),
        member_paths,
    };
    let manifest_path = out_dir.join("committee.manifest");
    write_file(&manifest_path, &manifest.to_text())?;

    for (i, report) in reports.iter().enumerate() {
        println!(
            "member {i}: {} rules, training accuracy {:.4} (seed {})",
            report.model().rules().len(),
            report.training_accuracy(),
            report.model().meta().seed
        );
    }
    println!("committee manifest -> {}", manifest_path.display());
    Ok(())
}

pub fn compare(ctx: &Ctx, args: CompareArgs) -> Result<(), CliError> {
    let train_path = require(pick_opt(args.train, ctx.config.train.clone()), "train corpus")?;
    let test_path = require(pick_opt(args.test, ctx.config.test.clone()), "test corpus")?;
    let train = load_corpus(&train_path)?;
    let test = load_corpus(&test_path)?;
    let runs = pick(args.runs, ctx.config.runs, 10);
    let seed_base = pick(args.flags.seed, ctx.config.seed, 0);

    let clusters = match pick_opt(args.clusters, ctx.config.clusters.clone()) {
        Some(path) => Some(load_clusters(&path)?),
        None => None,
    };
    let external = match pick_opt(args.cue_list, ctx.config.cue_list.clone()) {
        Some(path) => Some(parse_cue_list(&read_file(&path)?)),
        None => None,
    };
    let templates = ctx.templates(&args.flags)?;
    let training = ctx.training_config(&args.flags);
    let exhaustive = ctx.exhaustive(&args.flags);

    let mut rows: Vec<(SubstringMode, usize, TrialStats)> = Vec::new();
    for mode_name in args.modes.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        let mode: SubstringMode = mode_name.parse().map_err(CliError::from)?;
        let cue_config = CueConfig { mode, ..ctx.cue_config(&args.cues)? };
        let setup = TrialSetup {
            templates: &templates,
            cue_config: cue_config.clone(),
            external_cues: external.as_deref(),
            clusters: clusters.as_ref(),
            training: TrainingConfig { seed: seed_base, ..training.clone() },
            exhaustive,
        };
        let stats = run_trials(&train, &test, &setup, runs, seed_base)?;
        let counting_corpus = if mode.uses_clusters() {
            let map = clusters.as_ref().ok_or_else(|| {
                CliError::Domain(format!("mode {mode} requires a cluster map"))
            })?;
            apply_clusters(&train, map)
        } else {
            train.clone()
        };
        let count = substring_source(&counting_corpus, &cue_config, external.as_deref())?.len();
        if ctx.verbose > 0 {
            eprintln!("mode {mode}: runs {:?}", stats.runs);
        }
        rows.push((mode, count, stats));
    }

    let mut table = String::from("mode\tsubstrings\tmean\tsigma\n");
    for (mode, count, stats) in &rows {
        table.push_str(&format!(
            "{mode}\t{count}\t{:.2}%\t{:.2}%\n",
            stats.mean * 100.0,
            stats.sigma * 100.0
        ));
    }
    if rows.len() > 1 && runs >= 2 {
        table.push_str("pair\tt\tp\tsignificant_at_05\n");
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let result = t_test(&rows[i].2.runs, &rows[j].2.runs)?;
                table.push_str(&format!(
                    "{} vs {}\t{:.4}\t{:.4}\t{}\n",
                    rows[i].0, rows[j].0, result.t, result.p, result.significant_at_05
                ));
            }
        }
    }
    print!("{table}");
    if let Some(out) = args.out {
        write_file(&out, &table)?;
    }
    Ok(())
}
