use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::preprocess::read_segments;
use super::{manifest_for, prepare_output_dir, read_json, write_bytes, write_json};
use crate::cmmm::{fit_cmmm, CmmmDims, FitCmmmConfig};
use crate::context::expert::{expert_context, ExpertRule};
use crate::context::hmm::{hmm_decode, hmm_fit, HmmConfig};
use crate::context::topic::motif_topic_context;
use crate::context::{write_context_csv, ContextSequence};
use crate::derived::{context_spans, discover_derived, discover_in_context, match_motif, per_sample_labels, DerivedConfig, DerivedMotif};
use crate::error::{Error, Result};
use crate::eval::features::{attach_contexts, tokens_from_contextual, tokens_from_motifs, tokens_from_occurrences, Token};
use crate::mmm::{assign_motifs, fit_mmm, MmmConfig, MotifLabeling, DEFAULT_VARIANCE_FLOOR};
use crate::rng;
use crate::signal::DaySegment;

pub const TOKENS_FILE: &str = "tokens.csv";
pub const DISCOVERY_FILE: &str = "discovery.json";
pub const MODEL_FILE: &str = "model.json";
pub const CONTEXTS_FILE: &str = "contexts.csv";
pub const TRACE_FILE: &str = "log_prob_trace.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscoverMethod {
    Derived,
    Mmm,
    Cmmm,
    TwoStageExpert,
    TwoStageHmm,
    TwoStageTopic,
}

impl DiscoverMethod {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown discovery method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextSource {
    Expert,
    Hmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoverConfig {
    /// Directory written by the preprocess stage.
    pub segments: PathBuf,
    pub method: DiscoverMethod,
    pub n_motifs: usize,
    pub motif_len: usize,
    pub context_len: usize,
    pub n_contexts: usize,
    pub n_samples: usize,
    pub burn_in: usize,
    pub n_chains: usize,
    pub mmm_max_iters: usize,
    pub derived: DerivedConfig,
    /// Contexts used to run derived discovery per context.
    pub derived_context: Option<ContextSource>,
    pub expert: ExpertRule,
    pub hmm_max_iters: usize,
    pub seed: u64,
}

impl Default for DiscoverConfig {
    fn default() -> Self {
        DiscoverConfig {
            segments: PathBuf::new(),
            method: DiscoverMethod::Cmmm,
            n_motifs: 20,
            motif_len: 8,
            context_len: 72,
            n_contexts: 2,
            n_samples: 2000,
            burn_in: 1000,
            n_chains: 1,
            mmm_max_iters: 200,
            derived: DerivedConfig::default(),
            derived_context: None,
            expert: ExpertRule::default(),
            hmm_max_iters: 500,
            seed: 0,
        }
    }
}

impl DiscoverConfig {
    fn cmmm_config(&self) -> FitCmmmConfig {
        FitCmmmConfig {
            n_samples: self.n_samples,
            burn_in: self.burn_in,
            n_chains: self.n_chains,
            mmm_max_iters: self.mmm_max_iters,
            ..FitCmmmConfig::new(
                CmmmDims::new(self.n_contexts, self.n_motifs, self.motif_len, self.context_len),
                self.seed,
            )
        }
    }

    fn mmm_config(&self) -> MmmConfig {
        MmmConfig {
            n_motifs: self.n_motifs,
            motif_len: self.motif_len,
            max_iters: self.mmm_max_iters,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            seed: rng::derive_seed(self.seed, "discover-mmm", 0),
            ..MmmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        use DiscoverMethod::*;
        match self.method {
            Derived => self.derived.validate()?,
            Cmmm => self.cmmm_config().validate()?,
            _ => {
                if self.n_motifs == 0 || self.motif_len == 0 {
                    return Err(Error::param("n_motifs", "n_motifs and motif_len must be >= 1"));
                }
                if self.n_contexts < 1 {
                    return Err(Error::param("n_contexts", "must be >= 1"));
                }
                if self.method == TwoStageTopic && (self.context_len == 0 || self.context_len % self.motif_len != 0) {
                    return Err(Error::param("context_len", "must be a positive multiple of motif_len"));
                }
            }
        }
        if self.method == TwoStageExpert && self.n_contexts != 2 {
            return Err(Error::param("n_contexts", "the expert rule yields exactly 2 contexts"));
        }
        if self.expert.k == 0 || !self.expert.tau.is_finite() {
            return Err(Error::param("expert", "k must be >= 1 and tau finite"));
        }
        Ok(())
    }
}

/// What a discovery run produced; stored as `discovery.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverySummary {
    pub method: DiscoverMethod,
    /// Number of distinct motif ids (including the background, if any).
    pub n_motifs: usize,
    pub n_contexts: Option<usize>,
    /// Motif id of the background component.
    pub background: Option<usize>,
    pub segment_ids: Vec<String>,
}

/// Stable id of a day segment.
pub fn segment_key(seg: &DaySegment) -> String {
    if seg.session_id.is_empty() {
        seg.id()
    } else {
        format!("{}:{}:{}", seg.patient_id, seg.session_id, seg.date)
    }
}

fn write_tokens(path: &Path, ids: &[String], tokens: &[Vec<Token>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["segment_id", "motif", "context", "offset", "len"])?;
    for (id, toks) in ids.iter().zip(tokens) {
        for t in toks {
            w.write_record([
                id.clone(),
                t.motif.to_string(),
                t.context.map(|c| c.to_string()).unwrap_or_default(),
                t.offset.to_string(),
                t.len.to_string(),
            ])?;
        }
    }
    write_bytes(path, &w.into_inner().map_err(|e| Error::Serde(e.to_string()))?)
}

/// Tokens of a discovery directory, aligned with `segment_ids`.
pub fn read_tokens(dir: &Path, segment_ids: &[String]) -> Result<Vec<Vec<Token>>> {
    let path = dir.join(TOKENS_FILE);
    if !path.is_file() {
        return Err(Error::MissingArtifact(path));
    }
    let index: HashMap<&str, usize> = segment_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut out = vec![Vec::new(); segment_ids.len()];
    let mut r = csv::Reader::from_path(&path)?;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Malformed {
            line: line + 2,
            reason: format!("{}: bad {what}", path.display()),
        };
        let seg = *index.get(&rec[0]).ok_or_else(|| bad("segment_id"))?;
        let num = |i: usize, what: &str| rec[i].parse::<usize>().map_err(|_| bad(what));
        out[seg].push(Token {
            motif: num(1, "motif")?,
            context: if rec[2].is_empty() { None } else { Some(num(2, "context")?) },
            offset: num(3, "offset")?,
            len: num(4, "len")?,
        });
    }
    Ok(out)
}

/// A discovery directory loaded for evaluation.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub summary: DiscoverySummary,
    pub tokens: Vec<Vec<Token>>,
}

pub fn read_discovery(dir: &Path) -> Result<Discovery> {
    let summary: DiscoverySummary = read_json(&dir.join(DISCOVERY_FILE))?;
    let tokens = read_tokens(dir, &summary.segment_ids)?;
    Ok(Discovery { summary, tokens })
}

fn contexts_for(segments: &[DaySegment], source: ContextSource, cfg: &DiscoverConfig) -> Result<(Vec<ContextSequence>, serde_json::Value)> {
    match source {
        ContextSource::Expert => {
            let ctx = segments
                .iter()
                .map(|s| expert_context(&s.values, &cfg.expert))
                .collect::<Result<Vec<_>>>()?;
            Ok((ctx, serde_json::to_value(cfg.expert)?))
        }
        ContextSource::Hmm => {
            let hmm = hmm_fit(
                segments,
                &HmmConfig {
                    n_states: cfg.n_contexts,
                    max_iters: cfg.hmm_max_iters,
                    seed: rng::derive_seed(cfg.seed, "discover-hmm", 0),
                    ..HmmConfig::default()
                },
            )?;
            let ctx = segments.par_iter().map(|s| hmm_decode(&hmm, &s.values)).collect();
            Ok((ctx, serde_json::to_value(&hmm)?))
        }
    }
}

fn derived_tokens(motifs: &[DerivedMotif], values: &[f64], contexts: Option<&ContextSequence>, radius: f64) -> Vec<Token> {
    let lengths: Vec<usize> = motifs.iter().map(|m| m.length).collect();
    let labels = contexts.map(|c| per_sample_labels(c, values.len()));
    let spans = labels.as_deref().map(context_spans).unwrap_or_default();
    let mut occ = Vec::new();
    for m in motifs {
        match m.context_tag {
            Some(c) => {
                for &(_, a, b) in spans.iter().filter(|s| s.0 == c) {
                    occ.extend(match_motif(m, &values[a..b], radius, 0).into_iter().map(|mut o| {
                        o.offset += a;
                        o
                    }));
                }
            }
            None => occ.extend(match_motif(m, values, radius, 0)),
        }
    }
    let mut tokens = tokens_from_occurrences(&occ, &lengths);
    if let Some(ctx) = contexts {
        attach_contexts(&mut tokens, ctx, values.len());
        for t in tokens.iter_mut() {
            if let Some(tag) = motifs[t.motif].context_tag {
                t.context = Some(tag);
            }
        }
    }
    tokens
}

fn write_contexts(out: &Path, ids: &[String], contexts: &[ContextSequence]) -> Result<()> {
    let mut buf = Vec::new();
    let pairs: Vec<(String, &ContextSequence)> = ids.iter().cloned().zip(contexts.iter()).collect();
    write_context_csv(&mut buf, &pairs)?;
    write_bytes(&out.join(CONTEXTS_FILE), &buf)
}

fn mmm_labels(segments: &[DaySegment], cfg: &DiscoverConfig) -> Result<(crate::mmm::MotifModel, Vec<MotifLabeling>)> {
    let model = fit_mmm(segments, &cfg.mmm_config())?;
    let labs = segments.par_iter().map(|s| assign_motifs(&model, &s.values)).collect();
    Ok((model, labs))
}

/// Runs one discovery method on preprocessed segments and writes tokens,
/// model and diagnostics into `out`.
pub fn run_discover(cfg: &DiscoverConfig, out: &Path) -> Result<DiscoverySummary> {
    cfg.validate()?;
    let segments = read_segments(&cfg.segments)?;
    if segments.is_empty() {
        return Err(Error::InsufficientData(format!("{} holds no kept day segments", cfg.segments.display())));
    }
    let ids: Vec<String> = segments.iter().map(segment_key).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != ids.len() {
        return Err(Error::Config("duplicate segment ids in preprocessed data".into()));
    }
    let manifest = manifest_for("discover", cfg)?;
    prepare_output_dir(out, &manifest)?;
    let k = cfg.n_motifs + 1;
    let (tokens, n_motifs, n_contexts, background): (Vec<Vec<Token>>, usize, Option<usize>, Option<usize>) = match cfg.method {
        DiscoverMethod::Derived => {
            let (motifs, contexts) = match cfg.derived_context {
                None => (discover_derived(&segments, &cfg.derived)?, None),
                Some(src) => {
                    let (ctx, model) = contexts_for(&segments, src, cfg)?;
                    write_json(&out.join("context_model.json"), &model)?;
                    write_contexts(out, &ids, &ctx)?;
                    (discover_in_context(&segments, &ctx, &cfg.derived)?, Some(ctx))
                }
            };
            write_json(&out.join(MODEL_FILE), &motifs)?;
            let tokens: Vec<Vec<Token>> = segments
                .par_iter()
                .enumerate()
                .map(|(i, s)| derived_tokens(&motifs, &s.values, contexts.as_ref().map(|c| &c[i]), cfg.derived.radius))
                .collect();
            let nc = contexts.as_ref().map(|c| c.iter().map(|x| x.n_contexts).max().unwrap_or(1));
            (tokens, motifs.len(), nc, None)
        }
        DiscoverMethod::Mmm => {
            let (model, labs) = mmm_labels(&segments, cfg)?;
            write_json(&out.join(MODEL_FILE), &model)?;
            (labs.iter().map(tokens_from_motifs).collect(), k, None, Some(0))
        }
        DiscoverMethod::Cmmm => {
            let fit = fit_cmmm(&segments, &cfg.cmmm_config())?;
            write_json(&out.join(MODEL_FILE), &fit.model)?;
            if let Some(d) = &fit.model.diagnostics {
                let mut buf = String::from("sweep,log_prob\n");
                for (i, lp) in d.log_prob_trace.iter().enumerate() {
                    buf.push_str(&format!("{i},{lp:?}\n"));
                }
                write_bytes(&out.join(TRACE_FILE), buf.as_bytes())?;
            }
            let ctx: Vec<ContextSequence> = fit
                .labelings
                .iter()
                .map(|l| ContextSequence {
                    resolution: crate::context::Resolution::PerWindow(l.context_len),
                    n_contexts: cfg.n_contexts,
                    labels: l.contexts.clone(),
                })
                .collect();
            write_contexts(out, &ids, &ctx)?;
            (
                fit.labelings.iter().map(tokens_from_contextual).collect(),
                k,
                Some(cfg.n_contexts),
                Some(0),
            )
        }
        DiscoverMethod::TwoStageExpert | DiscoverMethod::TwoStageHmm | DiscoverMethod::TwoStageTopic => {
            let (model, labs) = mmm_labels(&segments, cfg)?;
            let (ctx, ctx_model) = match cfg.method {
                DiscoverMethod::TwoStageExpert => contexts_for(&segments, ContextSource::Expert, cfg)?,
                DiscoverMethod::TwoStageHmm => contexts_for(&segments, ContextSource::Hmm, cfg)?,
                _ => {
                    let topic = motif_topic_context(
                        &labs,
                        cfg.n_motifs,
                        cfg.context_len,
                        cfg.n_contexts,
                        rng::derive_seed(cfg.seed, "discover-topic", 0),
                    )?;
                    let gamma = serde_json::to_value(&topic.gamma)?;
                    (topic.labels, gamma)
                }
            };
            write_json(&out.join(MODEL_FILE), &model)?;
            write_json(&out.join("context_model.json"), &ctx_model)?;
            write_contexts(out, &ids, &ctx)?;
            let tokens = labs
                .iter()
                .zip(&ctx)
                .zip(&segments)
                .map(|((l, c), s)| {
                    let mut t = tokens_from_motifs(l);
                    attach_contexts(&mut t, c, s.len());
                    t
                })
                .collect();
            let nc = ctx.iter().map(|c| c.n_contexts).max().unwrap_or(1);
            (tokens, k, Some(nc), Some(0))
        }
    };
    write_tokens(&out.join(TOKENS_FILE), &ids, &tokens)?;
    let summary = DiscoverySummary {
        method: cfg.method,
        n_motifs,
        n_contexts,
        background,
        segment_ids: ids,
    };
    write_json(&out.join(DISCOVERY_FILE), &summary)?;
    Ok(summary)
}
