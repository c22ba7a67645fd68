use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use emplite::augment::{augment as augment_data, AugmentSpec, Strategy};
use emplite::bundle;
use emplite::corpus::{
    check_threshold, parse_dataset, read_glove, tokenize, write_tsv, AnnotatedSentence, DatasetFormat, GloveSubset,
    SemevalColumns, Vocabulary,
};
use emplite::heatmap::{render, Style};
use emplite::metrics::{align, evaluate, parse_predictions, write_predictions, PredictedSentence, Scores};
use emplite::model::{run_ablation, train as train_model, ModelConfig, Variant, WordVectors};
use emplite::nn::AttentionMode;
use emplite::postag::{pos_distribution, tag_corpus, PosDistribution, PosSource};
use emplite::synth::{generate, SynthConfig};

use crate::manifest::{beside, Manifest};
use crate::{CliError, TrainOpts};

type Res<T = ()> = Result<T, CliError>;

fn read_text(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Res {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_tsv(path: &Path) -> Res<Vec<AnnotatedSentence>> {
    if !path.exists() {
        return Err(CliError::usage(format!("{}: no such file", path.display())));
    }
    parse_dataset(path, &DatasetFormat::EmpliteTsv).map_err(|e| CliError::in_file(path, e))
}

fn load_optional(path: Option<&Path>) -> Res<Vec<AnnotatedSentence>> {
    path.map_or(Ok(Vec::new()), load_tsv)
}

/// Vectors for the training vocabulary only.
fn load_vectors(path: Option<&Path>, train: &[AnnotatedSentence], dim: usize) -> Res<Option<WordVectors>> {
    let Some(path) = path else { return Ok(None) };
    let vocab = Vocabulary::build(train)?;
    let wanted: HashSet<String> = vocab.words().iter().skip(2).cloned().collect();
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let vectors = read_glove(file, dim, Some(&wanted)).map_err(|e| CliError::in_file(path, e))?;
    Ok(Some(vectors))
}

fn model_config(opts: &TrainOpts) -> Res<ModelConfig> {
    let cfg = ModelConfig {
        variant: Variant::parse(&opts.variant)?,
        threshold: opts.threshold,
        seed: opts.seed,
        max_epochs: opts.epochs,
        patience: opts.patience,
        batch_size: opts.batch_size,
        learning_rate: opts.lr,
        attention_mode: AttentionMode::parse(&opts.attention_mode)?,
        word_dim: opts.dim,
        ..ModelConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn scores_kv(prefix: &str, s: &Scores) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = s
        .matches
        .iter()
        .enumerate()
        .map(|(i, v)| (format!("{prefix}match_{}", i + 1), format!("{v:.4}")))
        .collect();
    out.push((format!("{prefix}average"), format!("{:.4}", s.average)));
    out
}

fn parse_columns(spec: &str) -> Res<SemevalColumns> {
    let mut cols = SemevalColumns::default();
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("bad column spec `{part}`")))?;
        let idx = || v.parse::<usize>().map_err(|_| CliError::usage(format!("bad column index `{v}`")));
        match k {
            "token" => cols.token = idx()?,
            "annotations" => cols.annotations = idx()?,
            "pos" if v == "none" => cols.pos = None,
            "pos" => cols.pos = Some(idx()?),
            "header" => {
                cols.header = v
                    .parse()
                    .map_err(|_| CliError::usage(format!("header must be true|false, got `{v}`")))?
            }
            _ => return Err(CliError::usage(format!("unknown column key `{k}`"))),
        }
    }
    Ok(cols)
}

pub fn prepare(inputs: &[PathBuf], format: &str, columns: Option<&str>, output: &Path, pos: &str) -> Res {
    let format = match format {
        "emplite-tsv" => DatasetFormat::EmpliteTsv,
        "semeval" => DatasetFormat::Semeval(columns.map_or(Ok(SemevalColumns::default()), parse_columns)?),
        other => return Err(CliError::usage(format!("unknown format `{other}` (expected emplite-tsv|semeval)"))),
    };
    let source = PosSource::parse(pos)?;
    let mut manifest = Manifest::new(output.join("prepare.manifest"), "prepare");
    manifest.set("pos", pos);
    for input in inputs {
        if !input.exists() {
            return Err(CliError::usage(format!("{}: no such file", input.display())));
        }
        let mut data = parse_dataset(input, &format).map_err(|e| CliError::in_file(input, e))?;
        tag_corpus(&mut data, source).map_err(|e| CliError::in_file(input, e))?;
        let stem = input
            .file_stem()
            .ok_or_else(|| CliError::usage(format!("{}: no file name", input.display())))?;
        let out = output.join(stem).with_extension("tsv");
        write_text(&out, &write_tsv(&data))?;
        println!("{}: {} sentences -> {}", input.display(), data.len(), out.display());
        let name = stem.to_string_lossy();
        manifest.input(&name, input)?;
        manifest.output(&name, &out);
        manifest.set(&format!("sentences.{name}"), data.len());
    }
    manifest.write()?;
    Ok(())
}

pub fn subset_glove(train: &Path, glove: &Path, out: &Path, dim: usize) -> Res {
    let data = load_tsv(train)?;
    let vocab = Vocabulary::build(&data)?;
    let sub = GloveSubset::from_file(glove, &vocab, dim, 0).map_err(|e| CliError::in_file(glove, e))?;
    let text = sub.to_glove_text();
    write_text(out, &text)?;
    println!(
        "vocabulary {} words, {} found ({:.1}%), subset {} bytes -> {}",
        vocab.word_count(),
        sub.hits.len(),
        100.0 * sub.hit_rate(&vocab),
        text.len(),
        out.display()
    );
    let mut m = Manifest::new(beside(out), "subset-glove");
    m.input("train", train)?;
    m.input("glove", glove)?;
    m.output("subset", out);
    m.set("vocabulary", vocab.word_count());
    m.set("hits", sub.hits.len());
    m.set("bytes", text.len());
    m.write()?;
    Ok(())
}

pub fn train(train: &Path, dev: Option<&Path>, glove: Option<&Path>, out: &Path, opts: &TrainOpts) -> Res {
    let cfg = model_config(opts)?;
    let train_data = load_tsv(train)?;
    let dev_data = load_optional(dev)?;
    let vectors = load_vectors(glove, &train_data, cfg.word_dim)?;
    let result = train_model(&cfg, &train_data, &dev_data, vectors.as_ref())?;
    let bytes = bundle::save(&result.model, out).map_err(|e| CliError::in_file(out, e))?;

    let mut m = Manifest::new(beside(out), "train");
    m.input("train", train)?;
    if let Some(d) = dev {
        m.input("dev", d)?;
    }
    if let Some(g) = glove {
        m.input("glove", g)?;
    }
    m.set("seed", cfg.seed);
    m.config(&cfg.to_kv());
    for h in &result.history {
        println!("epoch {:3}  loss {:.5}  dev {:.4}", h.epoch, h.loss, h.dev_score);
        m.set(&format!("epoch.{}", h.epoch), format!("loss={:.6},dev={:.6}", h.loss, h.dev_score));
    }
    println!(
        "kept epoch {} (dev average {:.4}); {} trainable parameters; {bytes} bytes -> {}",
        result.best_epoch,
        result.best_score,
        result.model.trainable_params(),
        out.display()
    );
    m.set("best_epoch", result.best_epoch);
    m.set("score.dev_average", format!("{:.6}", result.best_score));
    m.set("trainable_params", result.model.trainable_params());
    if let Some(h) = result.glove_hits {
        m.set("glove_hits", h);
    }
    m.output("model", out);
    m.set("model_bytes", bytes);
    m.set("model.sha256", crate::manifest::digest_file(out)?);
    m.write()?;
    Ok(())
}

fn load_model(path: &Path) -> Res<emplite::model::Model> {
    if !path.exists() {
        return Err(CliError::usage(format!("{}: no such file", path.display())));
    }
    bundle::load(path).map_err(|e| CliError::in_file(path, e))
}

pub fn eval(model: Option<&Path>, pred_file: Option<&Path>, test: &Path, kv: bool, save_pred: Option<&Path>) -> Res {
    let test_data = load_tsv(test)?;
    let truth: Vec<Vec<f64>> = test_data.iter().map(|s| s.probability_values()).collect();
    let (preds, source) = match (model, pred_file) {
        (Some(mp), _) => {
            let m = load_model(mp)?;
            let probs = m.predict_sentences(&test_data)?;
            let preds: Vec<PredictedSentence> = test_data
                .iter()
                .zip(probs)
                .map(|(s, p)| PredictedSentence {
                    tokens: s.tokens.clone(),
                    probs: p,
                })
                .collect();
            if let Some(sp) = save_pred {
                write_text(sp, &write_predictions(&preds))?;
            }
            (preds, mp)
        }
        (None, Some(pf)) => {
            let preds = parse_predictions(&read_text(pf)?).map_err(|e| CliError::in_file(pf, e))?;
            (preds, pf)
        }
        (None, None) => return Err(CliError::usage("either --model or --pred-file is required")),
    };
    let scores = evaluate(&align(&truth, &preds)?)?;
    let lines = scores_kv("", &scores);
    for (k, v) in &lines {
        if kv {
            println!("{k}={v}");
        } else {
            println!("{k:<8} {v}");
        }
    }
    let mut m = Manifest::new(beside(source), "eval");
    m.input("test", test)?;
    m.input("scored", source)?;
    for (k, v) in lines {
        m.set(&format!("score.{k}"), v);
    }
    if let Some(sp) = save_pred {
        m.output("predictions", sp);
    }
    m.write()?;
    Ok(())
}

fn sentences_from(text: Option<&str>, file: Option<&Path>) -> Res<Vec<Vec<String>>> {
    let raw = match (text, file) {
        (Some(t), _) => t.to_string(),
        (None, Some(f)) => read_text(f)?,
        (None, None) => return Err(CliError::usage("either --text or --file is required")),
    };
    let out: Vec<Vec<String>> = raw.lines().map(tokenize).filter(|t| !t.is_empty()).collect();
    if out.is_empty() {
        return Err(CliError::from(emplite::Error::DegenerateInput("no tokens in input text".into())));
    }
    Ok(out)
}

fn score_sentences(model: &Path, text: Option<&str>, file: Option<&Path>) -> Res<Vec<(Vec<String>, Vec<f64>)>> {
    let m = load_model(model)?;
    sentences_from(text, file)?
        .into_iter()
        .map(|toks| {
            let p = m.predict(&toks, None)?;
            Ok((p.tokens, p.probs))
        })
        .collect()
}

pub fn predict(model: &Path, text: Option<&str>, file: Option<&Path>) -> Res {
    let preds: Vec<PredictedSentence> = score_sentences(model, text, file)?
        .into_iter()
        .map(|(tokens, probs)| PredictedSentence { tokens, probs })
        .collect();
    print!("{}", write_predictions(&preds));
    Ok(())
}

pub fn heatmap(model: &Path, text: Option<&str>, file: Option<&Path>, style: &str, out: Option<&Path>) -> Res {
    let style = Style::parse(style)?;
    let rendered = render(style, &score_sentences(model, text, file)?)?;
    match out {
        Some(o) => write_text(o, &rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

fn parse_variants(spec: &str) -> Res<Vec<Variant>> {
    if spec == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    spec.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| Variant::parse(s.trim()).map_err(CliError::from))
        .collect()
}

fn header_row(first: &str) -> String {
    format!("{first:<26} {:>7} {:>7} {:>7} {:>7} {:>7}", "m=1", "m=2", "m=3", "m=4", "avg")
}

fn score_row(first: &str, s: &Scores) -> String {
    format!(
        "{first:<26} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
        s.matches[0], s.matches[1], s.matches[2], s.matches[3], s.average
    )
}

#[allow(clippy::too_many_arguments)]
pub fn ablation(
    train: &Path,
    dev: Option<&Path>,
    test: &Path,
    glove: Option<&Path>,
    variants: &str,
    out: &Path,
    opts: &TrainOpts,
) -> Res {
    let variants = parse_variants(variants)?;
    let base = model_config(opts)?;
    let train_data = load_tsv(train)?;
    let dev_data = load_optional(dev)?;
    let test_data = load_tsv(test)?;
    let vectors = load_vectors(glove, &train_data, base.word_dim)?;
    let rows = run_ablation(&base, &variants, &train_data, &dev_data, &test_data, vectors.as_ref())?;

    let mut report = format!("{} {:>9} {:>10} {:>5}\n", header_row("variant"), "params", "bytes", "epoch");
    let mut m = Manifest::new(out.join("ablation.txt.manifest"), "ablation");
    m.input("train", train)?;
    if let Some(d) = dev {
        m.input("dev", d)?;
    }
    m.input("test", test)?;
    if let Some(g) = glove {
        m.input("glove", g)?;
    }
    m.set("seed", base.seed);
    for r in &rows {
        report.push_str(&format!(
            "{} {:>9} {:>10} {:>5}\n",
            score_row(r.variant.as_str(), &r.scores),
            r.params,
            r.file_bytes,
            r.best_epoch
        ));
        for (k, v) in scores_kv(&format!("{}.", r.variant), &r.scores) {
            m.set(&format!("score.{k}"), v);
        }
        m.set(&format!("params.{}", r.variant), r.params);
        m.set(&format!("bytes.{}", r.variant), r.file_bytes);
    }
    print!("{report}");
    let path = out.join("ablation.txt");
    write_text(&path, &report)?;
    m.output("report", &path);
    m.write()?;
    Ok(())
}

/// `a,b,c` or inclusive `lo..hi` in steps of 0.1.
pub fn parse_values(spec: &str) -> Res<Vec<f64>> {
    let bad = || CliError::usage(format!("bad value list `{spec}`"));
    let values: Vec<f64> = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let steps = ((hi - lo) / 0.1 + 1e-9).floor();
        if steps.is_nan() || steps < 0.0 {
            return Err(bad());
        }
        (0..=steps as usize).map(|i| ((lo + 0.1 * i as f64) * 1e6).round() / 1e6).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Res<_>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

pub fn sweep_threshold(train: &Path, dev: &Path, glove: Option<&Path>, values: &str, out: &Path, opts: &TrainOpts) -> Res {
    let values = parse_values(values)?;
    for &v in &values {
        check_threshold(v)?;
    }
    let base = model_config(opts)?;
    let train_data = load_tsv(train)?;
    let dev_data = load_tsv(dev)?;
    let vectors = load_vectors(glove, &train_data, base.word_dim)?;
    let mut report = header_row("threshold") + "\n";
    let mut m = Manifest::new(out.join("sweep.txt.manifest"), "sweep-threshold");
    m.input("train", train)?;
    m.input("dev", dev)?;
    if let Some(g) = glove {
        m.input("glove", g)?;
    }
    m.config(&base.to_kv());
    for v in values {
        let cfg = ModelConfig {
            threshold: v,
            ..base.clone()
        };
        let result = train_model(&cfg, &train_data, &dev_data, vectors.as_ref())?;
        let scores = result.model.score(&dev_data)?;
        let line = score_row(&format!("{v}"), &scores);
        println!("{line}");
        report.push_str(&line);
        report.push('\n');
        m.set(&format!("score.{v}.dev_average"), format!("{:.6}", scores.average));
    }
    let path = out.join("sweep.txt");
    write_text(&path, &report)?;
    m.output("report", &path);
    m.write()?;
    Ok(())
}

pub fn augment(input: &Path, strategy: &str, fraction: f64, seed: u64, output: &Path) -> Res {
    let data = load_tsv(input)?;
    let spec = AugmentSpec {
        strategy: Strategy::parse(strategy)?,
        fraction,
        seed,
    };
    let out = augment_data(&data, &spec)?;
    write_text(output, &write_tsv(&out))?;
    println!("{} sentences -> {} ({})", data.len(), out.len(), output.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn augment_experiment(
    train: &Path,
    dev: Option<&Path>,
    test: Option<&Path>,
    glove: Option<&Path>,
    strategies: &str,
    fractions: &str,
    out: &Path,
    opts: &TrainOpts,
) -> Res {
    let base = model_config(opts)?;
    let train_data = load_tsv(train)?;
    let dev_data = load_optional(dev)?;
    let scored = match test.or(dev) {
        Some(p) => load_tsv(p)?,
        None => return Err(CliError::usage("augment-experiment needs --test or --dev to score on")),
    };
    let fractions = parse_values(fractions)?;
    let vectors = load_vectors(glove, &train_data, base.word_dim)?;
    let mut runs: Vec<(String, Option<(Strategy, f64)>)> = Vec::new();
    for s in strategies.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if s == "none" {
            runs.push(("none".into(), None));
        } else {
            let st = Strategy::parse(s)?;
            for &f in &fractions {
                runs.push((format!("{} @ {:.0}%", st.as_str(), 100.0 * f), Some((st, f))));
            }
        }
    }
    let mut report = format!("{} {:>9}\n", header_row("augmentation"), "sentences");
    let mut m = Manifest::new(out.join("augment.txt.manifest"), "augment-experiment");
    m.input("train", train)?;
    if let Some(d) = dev {
        m.input("dev", d)?;
    }
    if let Some(t) = test {
        m.input("test", t)?;
    }
    m.config(&base.to_kv());
    for (label, run) in runs {
        let data = match run {
            None => train_data.clone(),
            Some((strategy, fraction)) => augment_data(
                &train_data,
                &AugmentSpec {
                    strategy,
                    fraction,
                    seed: base.seed,
                },
            )?,
        };
        let result = train_model(&base, &data, &dev_data, vectors.as_ref())?;
        let scores = result.model.score(&scored)?;
        let line = format!("{} {:>9}", score_row(&label, &scores), data.len());
        println!("{line}");
        report.push_str(&line);
        report.push('\n');
        m.set(&format!("score.{label}.average"), format!("{:.6}", scores.average));
    }
    let path = out.join("augment.txt");
    write_text(&path, &report)?;
    m.output("report", &path);
    m.write()?;
    Ok(())
}

fn print_distribution(title: &str, list: &[(emplite::postag::PosTag, f64)], top: usize) {
    println!("{title}");
    if list.is_empty() {
        println!("  (none)");
    }
    for (tag, share) in list.iter().take(top) {
        println!("  {:<6} {share:6.2}%", tag.as_str());
    }
}

pub fn pos_stats(train: &Path, threshold: f64, pos: &str, top: usize) -> Res {
    check_threshold(threshold)?;
    let mut data = load_tsv(train)?;
    tag_corpus(&mut data, PosSource::parse(pos)?).map_err(|e| CliError::in_file(train, e))?;
    let PosDistribution { all, emphasized } = pos_distribution(&data, threshold)?;
    print_distribution("all tokens", &all, top);
    print_distribution(&format!("tokens with emphasis probability >= {threshold}"), &emphasized, top);
    Ok(())
}

pub fn synth(out_dir: &Path, small: bool, seed: u64) -> Res {
    let cfg = if small {
        SynthConfig::small(seed)
    } else {
        SynthConfig { seed, ..SynthConfig::default() }
    };
    let corpus = generate(&cfg)?;
    for (name, data) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        write_text(&out_dir.join(format!("{name}.tsv")), &write_tsv(data))?;
    }
    write_text(&out_dir.join("vectors.txt"), &corpus.vectors_text)?;
    println!(
        "{} / {} / {} sentences and {} vectors -> {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        corpus.vectors_text.lines().count(),
        out_dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists_and_ranges() {
        assert_eq!(parse_values("0.2..0.6").unwrap(), vec![0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(parse_values("0.4").unwrap(), vec![0.4]);
        assert_eq!(parse_values("0.2, 0.4,0.6").unwrap(), vec![0.2, 0.4, 0.6]);
        assert!(parse_values("x").is_err());
    }

    #[test]
    fn column_spec() {
        let c = parse_columns("token=0,annotations=3,pos=none,header=false").unwrap();
        assert_eq!((c.token, c.annotations, c.pos, c.header), (0, 3, None, false));
        assert!(parse_columns("bogus=1").is_err());
    }
}
