use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use talkdet::learn::{train, Dataset, Hyper, LabeledExample, ModelKind};
use talkdet::provenance::Provenance;
use talkdet::Label;
use talkdet_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(td_last_error()) }.to_string_lossy().into_owned()
}

/// Two clusters in the unit square: talking near (1, 1), not near (0, 0).
fn save_model(dir: &Path, kind: ModelKind) -> PathBuf {
    let examples = (0..20)
        .map(|i| {
            let talking = i % 2 == 0;
            let base = if talking { 0.8 } else { 0.1 };
            let jitter = (i as f64) * 0.005;
            LabeledExample {
                features: vec![base + jitter, base - jitter],
                label: if talking { Label::Talking } else { Label::NotTalking },
                clip_ref: format!("c{i}"),
            }
        })
        .collect();
    let data = Dataset::new(examples).unwrap();
    let model = train(kind, &data, &Hyper::default(), 0).unwrap();
    let path = dir.join(format!("{kind}.json"));
    model.save(&path, &Provenance::new("test", 0)).unwrap();
    path
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn model_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = cpath(&save_model(dir.path(), ModelKind::Knn));
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(td_model_load(path.as_ptr(), &mut model), TdStatus::Ok);
        let mut dim = 0;
        assert_eq!(td_model_dim(model, &mut dim), TdStatus::Ok);
        assert_eq!(dim, 2);
        let (mut score, mut label) = (-1.0, -1);
        let x = [0.85, 0.8];
        assert_eq!(td_model_score(model, x.as_ptr(), 2, &mut score), TdStatus::Ok);
        assert_eq!(td_model_predict(model, x.as_ptr(), 2, &mut label), TdStatus::Ok);
        assert!(score > 0.5);
        assert_eq!(label, 1);

        label = 7;
        assert_eq!(td_model_predict(model, x.as_ptr(), 1, &mut label), TdStatus::Dimension);
        assert_eq!(label, 7, "out-pointer untouched on failure");
        assert!(last_error().contains("dimension"));
        td_model_free(model);
        td_model_free(ptr::null_mut());
    }
}

#[test]
fn load_failures_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = save_model(dir.path(), ModelKind::Dtree);
    let text = std::fs::read_to_string(&good).unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        let missing = cpath(&dir.path().join("nope.json"));
        assert_eq!(td_model_load(missing.as_ptr(), &mut model), TdStatus::Io);
        assert!(model.is_null());

        let versioned = dir.path().join("v.json");
        std::fs::write(&versioned, text.replace("\"format_version\":1", "\"format_version\":9")).unwrap();
        assert_eq!(td_model_load(cpath(&versioned).as_ptr(), &mut model), TdStatus::UnsupportedVersion);

        let truncated = dir.path().join("t.json");
        std::fs::write(&truncated, &text[..text.len() / 3]).unwrap();
        assert_eq!(td_model_load(cpath(&truncated).as_ptr(), &mut model), TdStatus::CorruptModel);

        assert_eq!(td_model_load(ptr::null(), &mut model), TdStatus::NullPointer);
        assert_eq!(td_model_load(cpath(&good).as_ptr(), ptr::null_mut()), TdStatus::NullPointer);
        assert!(model.is_null());
    }
}

#[test]
fn ensemble_votes_follow_members() {
    use talkdet::ensemble::{EnsembleMember, EnsembleModel};
    let dir = tempfile::tempdir().unwrap();
    let members = [ModelKind::Knn, ModelKind::Dtree, ModelKind::Gbt].map(|k| {
        let path = save_model(dir.path(), k);
        EnsembleMember {
            model: talkdet::learn::TrainedModel::load(&path).unwrap(),
            model_id: k.to_string(),
            path,
        }
    });
    let ens_path = dir.path().join("ensemble.json");
    EnsembleModel::new(members, None)
        .unwrap()
        .save(&ens_path, &Provenance::new("test", 0))
        .unwrap();
    let mut ens = ptr::null_mut();
    unsafe {
        assert_eq!(td_ensemble_load(cpath(&ens_path).as_ptr(), &mut ens), TdStatus::Ok);
        let mut dim = 0;
        assert_eq!(td_ensemble_dim(ens, &mut dim), TdStatus::Ok);
        assert_eq!(dim, 2);
        for (x, expect) in [([0.82, 0.79], 1), ([0.1, 0.12], 0)] {
            let mut label = -1;
            let mut votes = [-1i32; 3];
            assert_eq!(td_ensemble_predict(ens, x.as_ptr(), 2, &mut label, votes.as_mut_ptr()), TdStatus::Ok);
            assert_eq!(label, expect);
            assert_eq!(votes, [expect; 3]);
            assert_eq!(td_ensemble_predict(ens, x.as_ptr(), 2, &mut label, ptr::null_mut()), TdStatus::Ok);
        }
        td_ensemble_free(ens);
    }
}

#[test]
fn metrics_auc_and_f1() {
    unsafe {
        let mut m = TdMetrics { accuracy: 0.0, precision: 0.0, recall: 0.0, f1: 0.0 };
        assert_eq!(td_metrics(1785, 960, 702, 2177, &mut m), TdStatus::Ok);
        assert!((m.precision - 0.69).abs() <= 0.005 && (m.recall - 0.76).abs() <= 0.005);
        assert_eq!(td_metrics(0, 0, 0, 0, &mut m), TdStatus::Ok);
        assert!(m.accuracy.is_nan() && m.f1.is_nan());

        let mut f1 = 0.0;
        assert_eq!(td_f1_from_counts(107360, 14870, 17360, &mut f1), TdStatus::Ok);
        assert!((f1 - 0.87).abs() <= 0.005);

        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0, 0, 1, 1];
        let mut a = 0.0;
        assert_eq!(td_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut a), TdStatus::Ok);
        assert_eq!(a, 0.75);
        let bad = [0, 2, 1, 1];
        assert_eq!(td_auc(scores.as_ptr(), bad.as_ptr(), 4, &mut a), TdStatus::InvalidArgument);
        let one_class = [1, 1, 1, 1];
        assert_eq!(td_auc(scores.as_ptr(), one_class.as_ptr(), 4, &mut a), TdStatus::InvalidArgument);
    }
}

#[test]
fn flow_and_clip_features() {
    let (w, h) = (48usize, 40usize);
    let frame = |dx: f64| -> Vec<u8> {
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64 - dx, (i / w) as f64);
                (127.5 + 60.0 * (x * 0.35).sin() * (y * 0.3).cos()) as u8
            })
            .collect()
    };
    let (a, b) = (frame(0.0), frame(1.0));
    let mut u = vec![0.0; w * h];
    let mut v = vec![0.0; w * h];
    unsafe {
        assert_eq!(td_flow(a.as_ptr(), b.as_ptr(), w, h, u.as_mut_ptr(), v.as_mut_ptr()), TdStatus::Ok);
    }
    let centre = (h / 2) * w + w / 2;
    assert!((u[centre] - 1.0).abs() < 0.25, "u = {}", u[centre]);
    assert!(v[centre].abs() < 0.25, "v = {}", v[centre]);

    let clip: Vec<u8> = (0..5).flat_map(|k| frame(k as f64 * 0.5)).collect();
    let mut proj = vec![0.0; w * h];
    let mut feats = vec![-1.0; 16];
    unsafe {
        assert_eq!(
            td_clip_features(clip.as_ptr(), w, h, 5, 4, 4, proj.as_mut_ptr(), feats.as_mut_ptr()),
            TdStatus::Ok
        );
        assert!(proj.iter().all(|&p| p >= 4.0 * 0.01f64.ln() - 1e-9));
        assert!(feats.iter().all(|f| (0.0..=1.0).contains(f)));
        assert_eq!(
            td_clip_features(clip.as_ptr(), w, h, 1, 4, 4, ptr::null_mut(), feats.as_mut_ptr()),
            TdStatus::InvalidArgument
        );
        assert_eq!(
            td_clip_features(clip.as_ptr(), w, h, 5, 0, 4, ptr::null_mut(), feats.as_mut_ptr()),
            TdStatus::InvalidArgument
        );
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(td_version()) }.to_str().unwrap();
    assert_eq!(v, talkdet::TOOL_VERSION);
}

/// `target/<profile>/`, where cargo places the static library.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = artifact_dir().join("libtalkdet_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let model = save_model(dir.path(), ModelKind::Qda);
    let out = Command::new(&exe).arg(&model).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        stdout,
        "precision 0.6511 recall 0.7753\n\
         dim 2 label 1 status 0\n\
         short status 3 error set\n\
         missing status 4 handle null\n"
    );
}
