//! Run configuration: a TOML file whose sections mirror the command-line
//! option groups. Flags given on the command line win over the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use crossbody::fsm::{FsmParams, Orientation};
use crossbody::scoring::{ScoringParams, TouchTime};
use crossbody::synth::{Behavior, GenParams, InstructionCount, NoiseParams, ResponseTiming};
use crossbody::{BodyPart, Exec};
use serde::Deserialize;

use crate::{input_error, Result};

pub const DEFAULT_OUT_DIR: &str = "runs";
pub const DEFAULT_RUN_ID: &str = "default";

/// Fields present in the file, with every section optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run_id: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub sequential: Option<bool>,
    pub gen: GenOpts,
    pub noise: NoiseOpts,
    pub fsm: FsmOpts,
    pub scoring: ScoringOpts,
    pub eval: EvalOpts,
    pub score: ScoreOpts,
    pub folds: FoldOpts,
    pub agree: AgreeOpts,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = crate::read_input(path)?;
        toml::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
    }
}

/// Where a command writes: `<out_dir>/<run_id>/<command>/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub out_dir: PathBuf,
    pub run_id: String,
}

impl RunLayout {
    pub fn root(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }

    pub fn stage(&self, command: &str) -> PathBuf {
        self.root().join(command)
    }
}

impl Default for RunLayout {
    fn default() -> Self {
        RunLayout { out_dir: DEFAULT_OUT_DIR.into(), run_id: DEFAULT_RUN_ID.into() }
    }
}

/// Options shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonOpts {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root [default: runs]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Run directory name under the output root [default: default]
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    /// Process sessions on the calling thread only
    #[arg(long, global = true)]
    pub sequential: bool,
}

impl CommonOpts {
    pub fn layout(&self, cfg: &Config) -> Result<RunLayout> {
        let run_id = self
            .run_id
            .clone()
            .or_else(|| cfg.run_id.clone())
            .unwrap_or_else(|| DEFAULT_RUN_ID.into());
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
            return Err(input_error(format!("invalid run_id {run_id:?}")));
        }
        Ok(RunLayout {
            out_dir: self
                .out_dir
                .clone()
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
            run_id,
        })
    }

    pub fn exec(&self, cfg: &Config) -> Exec {
        if self.sequential || cfg.sequential.unwrap_or(false) {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    Prompt,
    Late,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationArg {
    Facing,
    Mirrored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TouchTimeArg {
    Onset,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Gt,
    Pred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Task,
    Subject,
}

fn check_prob(name: &str, p: Option<f64>) -> Result<f64> {
    let p = p.unwrap_or(0.0);
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(input_error(format!("{name} must be in [0, 1], got {p}")))
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenOpts {
    /// Master seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of sessions [default: 50]
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Number of distinct subjects [default: 10]
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Frame rate of generated clips [default: 30]
    #[arg(long)]
    pub fps: Option<f64>,
    /// Instructions per session; unset draws 3 with probability 0.7, else 2
    #[arg(long)]
    pub instructions: Option<usize>,
    /// Shortest clip in seconds [default: 3.1]
    #[arg(long)]
    pub min_len: Option<f64>,
    /// Longest clip in seconds [default: 3.6]
    #[arg(long)]
    pub max_len: Option<f64>,
    /// Response timing relative to each instruction [default: prompt]
    #[arg(long, value_enum)]
    pub timing: Option<Timing>,
    /// Probability a subject skips a touch [default: 0]
    #[arg(long)]
    pub miss_p: Option<f64>,
    /// Probability a subject touches the wrong part [default: 0]
    #[arg(long)]
    pub wrong_part_p: Option<f64>,
    /// Write keypoint streams next to the labels [default: true]
    #[arg(long)]
    pub keypoints: Option<bool>,
}

impl GenOpts {
    pub fn overlay(self, file: &GenOpts) -> GenOpts {
        GenOpts {
            seed: self.seed.or(file.seed),
            sessions: self.sessions.or(file.sessions),
            subjects: self.subjects.or(file.subjects),
            fps: self.fps.or(file.fps),
            instructions: self.instructions.or(file.instructions),
            min_len: self.min_len.or(file.min_len),
            max_len: self.max_len.or(file.max_len),
            timing: self.timing.or(file.timing),
            miss_p: self.miss_p.or(file.miss_p),
            wrong_part_p: self.wrong_part_p.or(file.wrong_part_p),
            keypoints: self.keypoints.or(file.keypoints),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| input_error("gen needs a seed: pass --seed or set [gen] seed in the config"))
    }

    /// Session template; the corpus generator fills in seed, ids and task.
    pub fn template(&self, fsm: Option<FsmParams>, scoring: &ScoringParams) -> Result<GenParams> {
        let base = GenParams::default();
        Ok(GenParams {
            fps: self.fps.unwrap_or(base.fps),
            video_len_s: (
                self.min_len.unwrap_or(base.video_len_s.0),
                self.max_len.unwrap_or(base.video_len_s.1),
            ),
            instructions: self.instructions.map_or(InstructionCount::Typical, InstructionCount::Fixed),
            w_max: scoring.w_max,
            rhythm_window: scoring.rhythm_window,
            timing: match self.timing {
                Some(Timing::Late) => ResponseTiming::Late,
                _ => ResponseTiming::Prompt,
            },
            behavior: Behavior {
                miss_p: check_prob("miss_p", self.miss_p)?,
                wrong_part_p: check_prob("wrong_part_p", self.wrong_part_p)?,
            },
            keypoints: fsm,
            ..base
        })
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseOpts {
    /// Standard deviation of prediction boundary shifts, in frames [default: 0]
    #[arg(long)]
    pub boundary_jitter_sd: Option<f64>,
    /// Probability a predicted segment gets a wrong class [default: 0]
    #[arg(long)]
    pub class_confusion_p: Option<f64>,
    /// Probability a predicted segment is split in two [default: 0]
    #[arg(long)]
    pub oversegmentation_p: Option<f64>,
    /// Probability a predicted segment is dropped [default: 0]
    #[arg(long)]
    pub deletion_p: Option<f64>,
}

impl NoiseOpts {
    pub fn overlay(self, file: &NoiseOpts) -> NoiseOpts {
        NoiseOpts {
            boundary_jitter_sd: self.boundary_jitter_sd.or(file.boundary_jitter_sd),
            class_confusion_p: self.class_confusion_p.or(file.class_confusion_p),
            oversegmentation_p: self.oversegmentation_p.or(file.oversegmentation_p),
            deletion_p: self.deletion_p.or(file.deletion_p),
        }
    }

    pub fn params(&self) -> Result<NoiseParams> {
        let p = NoiseParams {
            boundary_jitter_sd: self.boundary_jitter_sd.unwrap_or(0.0),
            class_confusion_p: self.class_confusion_p.unwrap_or(0.0),
            oversegmentation_p: self.oversegmentation_p.unwrap_or(0.0),
            deletion_p: self.deletion_p.unwrap_or(0.0),
        };
        p.validate().map_err(|e| input_error(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsmOpts {
    /// Approach radius in shoulder widths [default: 0.45]
    #[arg(long)]
    pub r_near: Option<f64>,
    /// Touch radius in shoulder widths [default: 0.18]
    #[arg(long)]
    pub r_touch: Option<f64>,
    /// Frames a hand must stay inside the touch radius [default: 1]
    #[arg(long)]
    pub min_touch_frames: Option<usize>,
    /// Abort gestures longer than this many frames [default: 2 x fps]
    #[arg(long)]
    pub max_gesture_frames: Option<usize>,
    /// Image orientation; facing puts the subject's right side at smaller x [default: facing]
    #[arg(long, value_enum)]
    pub orientation: Option<OrientationArg>,
    /// Frame rate of keypoint streams [default: 30]
    #[arg(long)]
    pub keypoint_fps: Option<f64>,
}

impl FsmOpts {
    pub fn overlay(self, file: &FsmOpts) -> FsmOpts {
        FsmOpts {
            r_near: self.r_near.or(file.r_near),
            r_touch: self.r_touch.or(file.r_touch),
            min_touch_frames: self.min_touch_frames.or(file.min_touch_frames),
            max_gesture_frames: self.max_gesture_frames.or(file.max_gesture_frames),
            orientation: self.orientation.or(file.orientation),
            keypoint_fps: self.keypoint_fps.or(file.keypoint_fps),
        }
    }

    pub fn params(&self) -> Result<FsmParams> {
        let d = FsmParams::default();
        let p = FsmParams {
            r_near: self.r_near.unwrap_or(d.r_near),
            r_touch: self.r_touch.unwrap_or(d.r_touch),
            min_touch_frames: self.min_touch_frames.unwrap_or(d.min_touch_frames),
            max_gesture_frames: self.max_gesture_frames.or(d.max_gesture_frames),
            orientation: match self.orientation {
                Some(OrientationArg::Mirrored) => Orientation::Mirrored,
                _ => Orientation::Facing,
            },
        };
        p.validate().map_err(|e| input_error(e.to_string()))?;
        Ok(p)
    }

    pub fn fps(&self) -> Result<f64> {
        let fps = self.keypoint_fps.unwrap_or(crossbody::model::DEFAULT_FPS);
        if fps.is_finite() && fps > 0.0 {
            Ok(fps)
        } else {
            Err(input_error(format!("invalid keypoint fps {fps}")))
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringOpts {
    /// Longest response window in seconds [default: 2.0]
    #[arg(long)]
    pub w_max: Option<f64>,
    /// Touches within this many seconds of an instruction earn rhythm [default: 1.0]
    #[arg(long)]
    pub rhythm_window: Option<f64>,
    /// Instant of a touch segment used for timing [default: onset]
    #[arg(long, value_enum)]
    pub touch_time: Option<TouchTimeArg>,
    /// Require consecutive matched touches to alternate hands [default: false]
    #[arg(long)]
    pub strict_alternation: Option<bool>,
}

impl ScoringOpts {
    pub fn overlay(self, file: &ScoringOpts) -> ScoringOpts {
        ScoringOpts {
            w_max: self.w_max.or(file.w_max),
            rhythm_window: self.rhythm_window.or(file.rhythm_window),
            touch_time: self.touch_time.or(file.touch_time),
            strict_alternation: self.strict_alternation.or(file.strict_alternation),
        }
    }

    pub fn params(&self) -> Result<ScoringParams> {
        let d = ScoringParams::default();
        let p = ScoringParams {
            w_max: self.w_max.unwrap_or(d.w_max),
            rhythm_window: self.rhythm_window.unwrap_or(d.rhythm_window),
            touch_time: match self.touch_time {
                Some(TouchTimeArg::Midpoint) => TouchTime::Midpoint,
                _ => TouchTime::Onset,
            },
            strict_alternation: self.strict_alternation.unwrap_or(d.strict_alternation),
        };
        p.validate().map_err(|e| input_error(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOpts {
    /// Directory of `*.manifest.json` files [default: <run>/gen]
    #[arg(long)]
    pub manifests: Option<PathBuf>,
    /// Read predictions from this directory instead of the manifest's path
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Collapse labels to these body parts before evaluating, e.g. ear,knee
    #[arg(long, value_delimiter = ',')]
    pub relabel: Option<Vec<String>>,
    /// IoU thresholds for segmental F1 [default: 0.10,0.25,0.50]
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Fold table; adds per-fold metrics
    #[arg(long)]
    pub folds: Option<PathBuf>,
}

impl EvalOpts {
    pub fn overlay(self, file: &EvalOpts) -> EvalOpts {
        EvalOpts {
            manifests: self.manifests.or_else(|| file.manifests.clone()),
            pred_dir: self.pred_dir.or_else(|| file.pred_dir.clone()),
            relabel: self.relabel.or_else(|| file.relabel.clone()),
            thresholds: self.thresholds.or_else(|| file.thresholds.clone()),
            folds: self.folds.or_else(|| file.folds.clone()),
        }
    }

    pub fn relabel_parts(&self) -> Result<Option<BTreeSet<BodyPart>>> {
        self.relabel
            .as_ref()
            .map(|names| {
                names
                    .iter()
                    .map(|n| n.trim().parse::<BodyPart>().map_err(|e| input_error(e.to_string())))
                    .collect()
            })
            .transpose()
    }

    pub fn thresholds(&self) -> Result<Vec<f64>> {
        let t = self
            .thresholds
            .clone()
            .unwrap_or_else(|| crossbody::metrics::DEFAULT_THRESHOLDS.to_vec());
        if t.is_empty() || t.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(input_error(format!("thresholds must lie in (0, 1], got {t:?}")));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOpts {
    /// Directory of `*.manifest.json` files [default: <run>/gen]
    #[arg(long)]
    pub manifests: Option<PathBuf>,
    /// Read predictions from this directory instead of the manifest's path
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Score the ground-truth labels or the predictions [default: pred]
    #[arg(long, value_enum)]
    pub source: Option<Source>,
}

impl ScoreOpts {
    pub fn overlay(self, file: &ScoreOpts) -> ScoreOpts {
        ScoreOpts {
            manifests: self.manifests.or_else(|| file.manifests.clone()),
            pred_dir: self.pred_dir.or_else(|| file.pred_dir.clone()),
            source: self.source.or(file.source),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldOpts {
    /// Number of folds [default: 6]
    #[arg(long)]
    pub k: Option<usize>,
    /// Shuffle seed [default: 0]
    #[arg(long = "fold-seed")]
    pub seed: Option<u64>,
    /// Subject list, one id per line; overrides --manifests
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    /// Take subjects from the manifests in this directory [default: <run>/gen]
    #[arg(long)]
    pub manifests: Option<PathBuf>,
}

impl FoldOpts {
    pub fn overlay(self, file: &FoldOpts) -> FoldOpts {
        FoldOpts {
            k: self.k.or(file.k),
            seed: self.seed.or(file.seed),
            subjects: self.subjects.or_else(|| file.subjects.clone()),
            manifests: self.manifests.or_else(|| file.manifests.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreeOpts {
    /// Machine score table [default: <run>/score/machine_scores.csv]
    #[arg(long)]
    pub machine: Option<PathBuf>,
    /// Human score table [default: <run>/gen/human_scores.csv]
    #[arg(long)]
    pub human: Option<PathBuf>,
    /// Compare per (subject, task) or per subject summed over tasks [default: task]
    #[arg(long, value_enum)]
    pub level: Option<Level>,
}

impl AgreeOpts {
    pub fn overlay(self, file: &AgreeOpts) -> AgreeOpts {
        AgreeOpts {
            machine: self.machine.or_else(|| file.machine.clone()),
            human: self.human.or_else(|| file.human.clone()),
            level: self.level.or(file.level),
        }
    }
}
