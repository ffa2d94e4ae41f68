use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ddrnn::cli::{run, EXIT_CHECK_FAILED, EXIT_IO, EXIT_OK, EXIT_SHAPE, EXIT_USAGE};
use ddrnn::data::{save_dataset, save_tensor, features_tensor, Sample};
use ddrnn::model::{save_model, AnyParams, SavedModel};
use ddrnn::numerics::Matrix;
use ddrnn::{Direction, Field, GridDims, LabelMap, ModelConfig, ModelParams, Variant};

fn ddrnn(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["ddrnn"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&f).unwrap()))
        .collect()
}

/// Single-direction plain model whose logits equal the input channels: the
/// identity embedding, input and output maps with no recurrence.
fn identity_model(classes: usize) -> SavedModel {
    let config = ModelConfig::new(classes, classes, classes, Variant::PlainDag, &[Direction::SE]).unwrap();
    let mut params = ModelParams::<f64>::zeros(&config);
    params.embed = Matrix::identity(classes);
    params.dirs[0].1.u = Matrix::identity(classes);
    params.dirs[0].1.v = Matrix::identity(classes);
    SavedModel { config, params: AnyParams::Extended(params) }
}

fn onehot(dims: GridDims, classes: usize, labels: &[u8]) -> Field<f64> {
    let mut data = vec![0.0; dims.len() * classes];
    for (g, &l) in labels.iter().enumerate() {
        data[g * classes + l as usize] = 1.0;
    }
    Field::from_vec(dims, classes, data).unwrap()
}

#[test]
fn gradcheck_exit_codes() {
    let (code, out, _) = ddrnn(&["gradcheck", "--variant", "dense-attention", "--direction", "all"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().all(|l| l.ends_with("PASS")));

    let (code, _, _) = ddrnn(&["gradcheck", "--variant", "plain-dag", "--direction", "se", "--tol", "0"]);
    assert_eq!(code, EXIT_CHECK_FAILED);

    let (code, _, err) = ddrnn(&["gradcheck", "--variant", "bogus"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("bogus") && err.contains("--help"));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(ddrnn(&["gen-data"]).0, EXIT_USAGE);
    assert_eq!(ddrnn(&["eval", "--model", "m", "--data", "d", "--frobnicate"]).0, EXIT_USAGE);
    assert_eq!(ddrnn(&["nonsense"]).0, EXIT_USAGE);
    for cmd in ["gradcheck", "gen-data", "train", "eval", "predict", "bench"] {
        let (code, out, _) = ddrnn(&[cmd, "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("Usage"), "{cmd}");
    }
    let (_, help, _) = ddrnn(&["gradcheck", "--help"]);
    assert!(help.contains("[default: 0.0001]") && help.contains("[default: all]"));
    let (_, help, _) = ddrnn(&["train", "--help"]);
    assert!(help.contains("[default: 0.01]") && help.contains("clip_threshold"));
}

#[test]
fn gen_data_layout_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let (code, out, _) = ddrnn(&["gen-data", "--task", "marker", "--samples", "200", "--seed", "4", "--out", p(d)]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("200 samples"));
    }
    assert_eq!(fs::read_dir(&a).unwrap().count(), 401);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));

    for task in ["blob", "chain"] {
        let d = tmp.path().join(task);
        assert_eq!(ddrnn(&["gen-data", "--task", task, "--samples", "3", "--out", p(&d)]).0, EXIT_OK);
        assert_eq!(fs::read_dir(&d).unwrap().count(), 7);
    }

    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let (code, _, _) = ddrnn(&["gen-data", "--samples", "1", "--out", p(&blocker.join("sub"))]);
    assert_eq!(code, EXIT_IO);
}

#[test]
fn train_writes_model_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let val = tmp.path().join("val");
    assert_eq!(ddrnn(&["gen-data", "--task", "blob", "--rows", "5", "--cols", "6", "--samples", "6", "--out", p(&data)]).0, 0);
    assert_eq!(ddrnn(&["gen-data", "--task", "blob", "--rows", "5", "--cols", "6", "--samples", "3", "--seed", "1", "--out", p(&val)]).0, 0);

    let config = tmp.path().join("run.cfg");
    fs::write(&config, format!("data={}\nvariant=dense-sum\nhidden=4\nepochs=9\nclip_threshold=5\n", p(&data))).unwrap();
    let mut models = Vec::new();
    for name in ["m1", "m2"] {
        let out = tmp.path().join(name);
        let (code, _, err) = ddrnn(&[
            "train", "--config", p(&config), "--val-data", p(&val), "--out", p(&out), "--epochs", "3",
            "--variant", "dense-attention",
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        models.push(out);
    }
    assert_eq!(dir_bytes(&models[0]), dir_bytes(&models[1]));
    let manifest = fs::read_to_string(models[0].join("manifest.txt")).unwrap();
    assert!(manifest.contains("variant=dense-attention"), "flags override the file");
    assert!(manifest.contains("hidden=4"));
    let history = fs::read_to_string(models[0].join("history.txt")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch loss lr gpa aca miou");
    assert_eq!(lines.len(), 4);
    assert!(!lines[3].contains("NaN"));

    let zero = tmp.path().join("zero");
    assert_eq!(ddrnn(&["train", "--data", p(&data), "--out", p(&zero), "--epochs", "0", "--hidden", "3"]).0, 0);
    assert_eq!(fs::read_to_string(zero.join("history.txt")).unwrap(), "epoch loss lr gpa aca miou\n");
    assert!(zero.join("se_w.ddrt").exists());

    fs::write(&config, "data=x\nlearning_rate=3\n").unwrap();
    assert_eq!(ddrnn(&["train", "--config", p(&config), "--out", p(&zero)]).0, EXIT_USAGE);
    assert_eq!(ddrnn(&["train", "--data", p(&data), "--out", p(&zero), "--variant", "bogus"]).0, EXIT_USAGE);
    assert_eq!(ddrnn(&["train", "--data", p(&tmp.path().join("missing")), "--out", p(&zero)]).0, EXIT_IO);
}

#[test]
fn eval_reproduces_hand_fixture_and_perfect_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let model_dir = tmp.path().join("model");
    save_model(&model_dir, &identity_model(2)).unwrap();

    // Ground truth [0,0,1,1]; the features make the model predict [0,1,1,1].
    let dims = GridDims::new(1, 4).unwrap();
    let sample = Sample::new(onehot(dims, 2, &[0, 1, 1, 1]), LabelMap::new(dims, vec![0, 0, 1, 1]).unwrap()).unwrap();
    let data = tmp.path().join("hand");
    save_dataset(&data, &[sample]).unwrap();
    let (code, out, _) = ddrnn(&["eval", "--model", p(&model_dir), "--data", p(&data)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("gpa=0.750000"));
    assert!(out.contains("aca=0.750000"));
    assert!(out.contains("miou=0.583333"));
    assert!(out.contains("mean IoU"));

    let dims = GridDims::new(3, 3).unwrap();
    let labels = vec![0, 1, 1, 0, 255, 1, 1, 1, 0];
    let shown: Vec<u8> = labels.iter().map(|&l| if l == 255 { 0 } else { l }).collect();
    let perfect = Sample::new(onehot(dims, 2, &shown), LabelMap::new(dims, labels).unwrap()).unwrap();
    let data = tmp.path().join("perfect");
    save_dataset(&data, &[perfect]).unwrap();
    let (code, out, _) = ddrnn(&["eval", "--model", p(&model_dir), "--data", p(&data)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("gpa=1.000000") && out.contains("miou=1.000000"));

    let wrong = Sample::new(onehot(dims, 3, &shown), LabelMap::filled(dims, 0)).unwrap();
    let data = tmp.path().join("wrong");
    save_dataset(&data, &[wrong]).unwrap();
    assert_eq!(ddrnn(&["eval", "--model", p(&model_dir), "--data", p(&data)]).0, EXIT_SHAPE);
}

#[test]
fn predict_writes_expected_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let model_dir = tmp.path().join("model");
    save_model(&model_dir, &identity_model(4)).unwrap();
    let dims = GridDims::new(2, 2).unwrap();
    let input = tmp.path().join("x.ddrt");
    save_tensor(&input, &features_tensor(&onehot(dims, 4, &[0, 1, 2, 3]))).unwrap();

    let (pgm, ppm) = (tmp.path().join("l.pgm"), tmp.path().join("l.ppm"));
    let args = ["predict", "--model", p(&model_dir), "--input", p(&input), "--out", p(&pgm), "--color", p(&ppm)];
    assert_eq!(ddrnn(&args).0, EXIT_OK);
    let mut expected = b"P5\n2 2\n255\n".to_vec();
    expected.extend_from_slice(&[0, 1, 2, 3]);
    let first = fs::read(&pgm).unwrap();
    assert_eq!(first, expected);
    assert!(fs::read(&ppm).unwrap().starts_with(b"P6\n2 2\n255\n"));
    assert_eq!(ddrnn(&args).0, EXIT_OK);
    assert_eq!(fs::read(&pgm).unwrap(), first);

    let wide = tmp.path().join("wide.ddrt");
    save_tensor(&wide, &features_tensor(&onehot(dims, 2, &[0, 1, 1, 0]))).unwrap();
    assert_eq!(ddrnn(&["predict", "--model", p(&model_dir), "--input", p(&wide), "--out", p(&pgm)]).0, EXIT_SHAPE);
    let missing = tmp.path().join("none.ddrt");
    assert_eq!(ddrnn(&["predict", "--model", p(&model_dir), "--input", p(&missing), "--out", p(&pgm)]).0, EXIT_IO);
}

#[test]
fn bench_smoke() {
    let start = std::time::Instant::now();
    let (code, out, _) = ddrnn(&["bench", "--sizes", "2", "--reps", "1", "--variant", "all"]);
    assert_eq!(code, EXIT_OK);
    assert!(start.elapsed().as_secs_f64() < 1.0);
    assert!(out.contains("dense-attention") && out.contains("dense/plain 2x2"));
    assert_eq!(ddrnn(&["bench", "--sizes", "x"]).0, EXIT_USAGE);
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_ddrnn");
    let status = Command::new(exe).args(["gradcheck", "--variant", "bogus"]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let status = Command::new(exe).args(["gradcheck", "--variant", "chain", "--direction", "se"]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    let status = Command::new(exe).args(["eval", "--model", "/nonexistent", "--data", "/nonexistent"]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_IO));
}
