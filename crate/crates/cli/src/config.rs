//! `key=value` training config files and their merge with flags.

use std::path::Path;

use anyhow::{Context, Result};
use taxkd::distill::DistillConfig;

use crate::cli::TrainArgs;
use crate::Invalid;

/// Settings read from a config file; unset keys stay `None`.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_student: Option<f64>,
    pub lr_teacher: Option<f64>,
    pub weight_decay: Option<f64>,
    pub seed: Option<u64>,
    pub deterministic: Option<bool>,
    pub student_hidden: Option<Vec<usize>>,
    pub teacher_hidden: Option<Vec<usize>>,
}

fn value<T: std::str::FromStr>(key: &str, raw: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| Invalid(format!("config line {line}: {key}={raw}: {e}")).into())
}

pub fn parse_widths(raw: &str) -> Result<Vec<usize>> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|e| Invalid(format!("hidden width {w:?}: {e}")).into())
        })
        .collect()
}

impl FileConfig {
    /// One `key=value` per line; `#` starts a comment. Keys use either
    /// dashes or underscores.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = FileConfig::default();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, raw)) = line.split_once('=') else {
                return Err(Invalid(format!("config line {n}: expected key=value")).into());
            };
            let key = key.trim().replace('-', "_");
            let raw = raw.trim();
            match key.as_str() {
                "alpha" => c.alpha = Some(value(&key, raw, n)?),
                "tau" => c.tau = Some(value(&key, raw, n)?),
                "epochs" => c.epochs = Some(value(&key, raw, n)?),
                "batch_size" | "batch" => c.batch_size = Some(value(&key, raw, n)?),
                "lr_student" => c.lr_student = Some(value(&key, raw, n)?),
                "lr_teacher" => c.lr_teacher = Some(value(&key, raw, n)?),
                "weight_decay" => c.weight_decay = Some(value(&key, raw, n)?),
                "seed" => c.seed = Some(value(&key, raw, n)?),
                "deterministic" => c.deterministic = Some(value(&key, raw, n)?),
                "student_hidden" => c.student_hidden = Some(parse_widths(raw)?),
                "teacher_hidden" => c.teacher_hidden = Some(parse_widths(raw)?),
                _ => return Err(Invalid(format!("config line {n}: unknown key {key:?}")).into()),
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}

/// Flags over file over defaults.
pub fn resolve(args: &TrainArgs, file: &FileConfig) -> Result<DistillConfig> {
    let d = DistillConfig::default();
    let teacher_hidden = match &args.teacher_hidden {
        Some(raw) => Some(parse_widths(raw)?),
        None => None,
    };
    let config = DistillConfig {
        alpha: args.alpha.or(file.alpha).unwrap_or(d.alpha),
        tau: args.tau.or(file.tau).unwrap_or(d.tau),
        epochs: args.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        lr_student: args.lr_student.or(file.lr_student).unwrap_or(d.lr_student),
        lr_teacher: args.lr_teacher.or(file.lr_teacher).unwrap_or(d.lr_teacher),
        weight_decay: args.weight_decay.or(file.weight_decay).unwrap_or(d.weight_decay),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        deterministic: args
            .deterministic
            .or(file.deterministic)
            .unwrap_or(d.deterministic),
        student_hidden: args
            .student_hidden
            .clone()
            .or_else(|| file.student_hidden.clone())
            .unwrap_or(d.student_hidden),
        teacher_hidden: teacher_hidden
            .or_else(|| file.teacher_hidden.clone())
            .unwrap_or(d.teacher_hidden),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn train_args(extra: &[&str]) -> TrainArgs {
        let mut argv = vec![
            "taxkd", "train", "--features", "f", "--labels", "l", "--fasta", "x", "--out", "o",
            "--history", "h",
        ];
        argv.extend_from_slice(extra);
        match crate::cli::Cli::parse_from(argv).command {
            crate::cli::Command::Train(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn parses_keys_and_comments() {
        let c = FileConfig::parse(
            "# run\nalpha = 0.5\nbatch-size=32\nstudent_hidden=8,4\nteacher_hidden=none\ndeterministic=false\n",
        )
        .unwrap();
        assert_eq!(c.alpha, Some(0.5));
        assert_eq!(c.batch_size, Some(32));
        assert_eq!(c.student_hidden, Some(vec![8, 4]));
        assert_eq!(c.teacher_hidden, Some(vec![]));
        assert_eq!(c.deterministic, Some(false));
        assert!(FileConfig::parse("alpha 0.5").is_err());
        assert!(FileConfig::parse("gamma=1").is_err());
        assert!(FileConfig::parse("epochs=-3").is_err());
    }

    #[test]
    fn precedence() {
        let file = FileConfig::parse("alpha=0.5\ntau=2\n").unwrap();
        let c = resolve(&train_args(&["--alpha", "0.9"]), &file).unwrap();
        assert_eq!(c.alpha, 0.9);
        assert_eq!(c.tau, 2.0);
        assert_eq!(c.epochs, 100);
        assert_eq!(c.batch_size, 64);
        let c = resolve(&train_args(&[]), &FileConfig::default()).unwrap();
        assert_eq!(c, DistillConfig::default());
    }

    #[test]
    fn out_of_range_is_rejected() {
        let err = resolve(&train_args(&["--alpha", "1.5"]), &FileConfig::default()).unwrap_err();
        assert!(crate::is_validation(&err));
    }
}
