use std::ffi::{c_char, CStr, CString};
use std::ptr;

use gradrec::synth::{generate_synthetic, write_synthetic, SyntheticSpec};
use gradrec::traversal::traverse;
use gradrec::{load_catalog, DirectionVector, KnnIndex};
use gradrec_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    base: CString,
    prompts: CString,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("cat");
    let synth = generate_synthetic(&SyntheticSpec::standard(300, 11)).unwrap();
    write_synthetic(&synth, &base).unwrap();
    let prompts = dir.path().join("cat.grprompt.jsonl");
    Fixture {
        base: CString::new(base.to_str().unwrap()).unwrap(),
        prompts: CString::new(prompts.to_str().unwrap()).unwrap(),
        _dir: dir,
    }
}

fn open(f: &Fixture) -> *mut GrecEngine {
    let mut e = ptr::null_mut();
    let s = unsafe { grec_engine_open(f.base.as_ptr(), f.prompts.as_ptr(), &mut e) };
    assert_eq!(s, GrecStatus::Ok);
    e
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    grec_string_free(s);
    out
}

fn last_error() -> String {
    let p = grec_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn open_info_and_knn() {
    let f = fixture();
    let e = open(&f);
    let (mut dim, mut len) = (0, 0);
    assert_eq!(
        unsafe { grec_engine_info(e, &mut dim, &mut len) },
        GrecStatus::Ok
    );
    assert_eq!((dim, len), (64, 300));

    let catalog = load_catalog(f.base.to_str().unwrap()).unwrap();
    let q = catalog.products()[7].image_vec.as_slice().to_vec();
    let mut rows = [0usize; 5];
    let mut sims = [0f64; 5];
    let mut count = 0;
    let s = unsafe {
        grec_knn(
            e,
            q.as_ptr(),
            q.len(),
            5,
            rows.as_mut_ptr(),
            sims.as_mut_ptr(),
            &mut count,
        )
    };
    assert_eq!(s, GrecStatus::Ok);
    assert_eq!(count, 5);
    assert_eq!(rows[0], 7);
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));

    let mut id = ptr::null_mut();
    assert_eq!(unsafe { grec_product_id(e, 7, &mut id) }, GrecStatus::Ok);
    assert_eq!(unsafe { take(id) }, catalog.products()[7].id);
    unsafe { grec_engine_free(e) };
}

#[test]
fn errors_carry_status_and_message() {
    let f = fixture();
    let e = open(&f);
    let prompt = CString::new("no such prompt").unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { grec_retrieve_json(e, prompt.as_ptr(), 3, &mut out) };
    assert_eq!(s, GrecStatus::UnknownPrompt);
    assert!(last_error().starts_with("UnknownPrompt:"));
    assert!(out.is_null());

    let s = unsafe { grec_engine_info(ptr::null(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, GrecStatus::NullPointer);

    let q = [1.0f32; 3];
    let (mut rows, mut sims, mut count) = ([0usize; 1], [0f64; 1], 0);
    let s = unsafe {
        grec_knn(
            e,
            q.as_ptr(),
            3,
            1,
            rows.as_mut_ptr(),
            sims.as_mut_ptr(),
            &mut count,
        )
    };
    assert_eq!(s, GrecStatus::DimMismatch);

    let missing = CString::new("/nonexistent/catalog").unwrap();
    let mut e2 = ptr::null_mut();
    let s = unsafe { grec_engine_open(missing.as_ptr(), ptr::null(), &mut e2) };
    assert_eq!(s, GrecStatus::IoFailure);
    assert!(e2.is_null());
    unsafe { grec_engine_free(e) };
}

#[test]
fn traversal_matches_library() {
    let f = fixture();
    let e = open(&f);
    let neutral = CString::new("attr0@+0.00").unwrap();
    let exemplar = CString::new("attr0@+1.00").unwrap();
    let mut d = ptr::null_mut();
    let s = unsafe {
        grec_direction_build(e, neutral.as_ptr(), exemplar.as_ptr(), 50, 50, 1e-6, &mut d)
    };
    assert_eq!(s, GrecStatus::Ok);

    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { grec_direction_to_json(d, &mut json) },
        GrecStatus::Ok
    );
    let direction = DirectionVector::from_json(&unsafe { take(json) }).unwrap();

    let mut values = vec![0f32; 64];
    assert_eq!(
        unsafe { grec_direction_values(d, values.as_mut_ptr(), 64) },
        GrecStatus::Ok
    );
    assert_eq!(values, direction.v_c.as_slice());
    let s = unsafe { grec_direction_values(d, values.as_mut_ptr(), 10) };
    assert_eq!(s, GrecStatus::BufferTooSmall);

    let cfg = grec_traversal_config_default();
    let index = KnnIndex::new(load_catalog(f.base.to_str().unwrap()).unwrap());
    let seed = index.id_of(0).to_string();
    let seed_c = CString::new(seed.clone()).unwrap();
    let mut path = ptr::null_mut();
    let s = unsafe { grec_traverse(e, seed_c.as_ptr(), d, &cfg, &mut path) };
    assert_eq!(s, GrecStatus::Ok);
    let mut steps = 0;
    assert_eq!(unsafe { grec_path_len(path, &mut steps) }, GrecStatus::Ok);

    let expected = traverse(&seed, &direction, &index, &(&cfg).into()).unwrap();
    assert_eq!(steps, expected.steps.len());
    let mut pj = ptr::null_mut();
    assert_eq!(
        unsafe { grec_path_to_json(path, true, &mut pj) },
        GrecStatus::Ok
    );
    assert_eq!(unsafe { take(pj) }, expected.to_json(true));

    // a single step from the seed lands on the first traversal position
    let mut next = vec![0f32; 64];
    let s = unsafe { grec_step(e, index.vector(0).as_ptr(), 64, d, &cfg, next.as_mut_ptr()) };
    assert_eq!(s, GrecStatus::Ok);
    assert_eq!(next, expected.steps[0].position.as_slice());

    let mut inv = ptr::null_mut();
    assert_eq!(
        unsafe { grec_direction_invert(d, &mut inv) },
        GrecStatus::Ok
    );
    let mut iv = vec![0f32; 64];
    unsafe { grec_direction_values(inv, iv.as_mut_ptr(), 64) };
    assert!(iv.iter().zip(&values).all(|(a, b)| *a == -*b));

    unsafe {
        grec_path_free(path);
        grec_direction_free(inv);
        grec_direction_free(d);
        grec_engine_free(e);
    }
}

#[test]
fn non_unit_direction_rejected() {
    let f = fixture();
    let e = open(&f);
    let json = CString::new(format!(
        "{{\"v_c\":[{}],\"snr_raw\":[],\"provenance\":null}}",
        vec!["0.125"; 64].join(",")
    ))
    .unwrap();
    let mut d = ptr::null_mut();
    let s = unsafe { grec_direction_from_json(json.as_ptr(), &mut d) };
    assert_eq!(s, GrecStatus::InvalidArgument);
    assert!(d.is_null());
    unsafe { grec_engine_free(e) };
}

#[test]
fn header_is_generated() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gradrec.h")).unwrap();
    for sym in [
        "grec_engine_open",
        "grec_traverse",
        "grec_string_free",
        "GREC_STATUS_UNKNOWN_SEED",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gradrec.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
