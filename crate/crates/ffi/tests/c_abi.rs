use std::ffi::{CStr, CString};
use std::ptr;

use ddrnn_ffi::*;

fn last_error() -> String {
    let p = ddrnn_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_model(precision: DdrnnPrecision) -> *mut DdrnnModel {
    let mut m = ptr::null_mut();
    let s = unsafe { ddrnn_model_new(3, 5, 4, DdrnnVariant::DenseAttention, DDRNN_DIR_ALL, precision, 7, &mut m) };
    assert_eq!(s, DdrnnStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn forward_predict_and_info() {
    let m = new_model(DdrnnPrecision::Extended);
    let mut info = DdrnnModelInfo::default();
    assert_eq!(unsafe { ddrnn_model_info(m, &mut info) }, DdrnnStatus::Ok);
    assert_eq!((info.in_channels, info.hidden, info.classes), (3, 5, 4));
    assert_eq!(info.directions, DDRNN_DIR_ALL);
    assert_eq!(info.variant, DdrnnVariant::DenseAttention as u32);

    let (rows, cols) = (3, 4);
    let x: Vec<f64> = (0..rows * cols * 3).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
    let mut probs = vec![0.0; rows * cols * 4];
    let s = unsafe { ddrnn_model_forward(m, rows, cols, x.as_ptr(), x.len(), probs.as_mut_ptr(), probs.len()) };
    assert_eq!(s, DdrnnStatus::Ok);
    for unit in probs.chunks(4) {
        assert!((unit.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let mut labels = vec![0u8; rows * cols];
    let s = unsafe { ddrnn_model_predict(m, rows, cols, x.as_ptr(), x.len(), labels.as_mut_ptr(), labels.len()) };
    assert_eq!(s, DdrnnStatus::Ok);
    for (unit, &l) in probs.chunks(4).zip(&labels) {
        let best = unit.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(unit.iter().position(|&p| p == best).unwrap(), l as usize);
    }

    let s = unsafe { ddrnn_model_forward(m, rows, cols, x.as_ptr(), x.len() - 1, probs.as_mut_ptr(), probs.len()) };
    assert_eq!(s, DdrnnStatus::Shape);
    assert!(last_error().contains("shape"));
    unsafe { ddrnn_model_free(m) };
}

#[test]
fn save_load_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let m = new_model(DdrnnPrecision::Standard);
    assert_eq!(unsafe { ddrnn_model_save(m, path.as_ptr()) }, DdrnnStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ddrnn_model_load(path.as_ptr(), &mut back) }, DdrnnStatus::Ok);

    let x = [0.25; 2 * 2 * 3];
    let (mut a, mut b) = (vec![0.0; 16], vec![0.0; 16]);
    unsafe {
        ddrnn_model_forward(m, 2, 2, x.as_ptr(), x.len(), a.as_mut_ptr(), a.len());
        ddrnn_model_forward(back, 2, 2, x.as_ptr(), x.len(), b.as_mut_ptr(), b.len());
    }
    assert_eq!(a, b);
    unsafe {
        ddrnn_model_free(m);
        ddrnn_model_free(back);
    }

    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ddrnn_model_load(missing.as_ptr(), &mut h) }, DdrnnStatus::Io);
    assert!(h.is_null());
}

#[test]
fn argument_errors() {
    let mut m = ptr::null_mut();
    let s = unsafe { ddrnn_model_new(3, 5, 1, DdrnnVariant::PlainDag, DDRNN_DIR_SE, DdrnnPrecision::Extended, 0, &mut m) };
    assert_eq!(s, DdrnnStatus::InvalidArgument);
    let s = unsafe { ddrnn_model_new(3, 5, 4, DdrnnVariant::PlainDag, 0, DdrnnPrecision::Extended, 0, &mut m) };
    assert_eq!(s, DdrnnStatus::InvalidArgument);
    assert!(last_error().contains("direction"));
    let s = unsafe { ddrnn_model_new(3, 5, 4, DdrnnVariant::PlainDag, 1, DdrnnPrecision::Extended, 0, ptr::null_mut()) };
    assert_eq!(s, DdrnnStatus::NullPointer);
    unsafe { ddrnn_model_free(ptr::null_mut()) };
}

#[test]
fn metrics_and_gradient_check() {
    let truth = [0u8, 0, 1, 1, 255];
    let pred = [0u8, 1, 1, 1, 0];
    let mut m = DdrnnMetrics::default();
    assert_eq!(unsafe { ddrnn_metrics_from_labels(2, truth.as_ptr(), pred.as_ptr(), 5, &mut m) }, DdrnnStatus::Ok);
    assert!((m.gpa - 0.75).abs() < 1e-12 && (m.aca - 0.75).abs() < 1e-12);
    assert!((m.mean_iou - 0.583333333).abs() < 1e-6);
    assert_eq!(m.total, 4);

    let mut g = DdrnnGradCheck::default();
    let s = unsafe { ddrnn_gradient_check(DdrnnVariant::DenseAttention, DDRNN_DIR_NW, 0, 1e-5, 1e-4, &mut g) };
    assert_eq!(s, DdrnnStatus::Ok);
    assert!(g.passed && g.compared > 0);
    let s = unsafe { ddrnn_gradient_check(DdrnnVariant::PlainDag, DDRNN_DIR_SE, 0, 1e-5, 0.0, &mut g) };
    assert_eq!(s, DdrnnStatus::CheckFailed);
    assert!(!g.passed);
    let s = unsafe { ddrnn_gradient_check(DdrnnVariant::PlainDag, DDRNN_DIR_ALL, 0, 1e-5, 1e-4, &mut g) };
    assert_eq!(s, DdrnnStatus::InvalidArgument);
}
