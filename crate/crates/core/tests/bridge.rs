use std::path::Path;
use std::time::Duration;

use fdvied::bridge::{invoke_generator, BridgeError, BridgeGenerator, CommandSpec, GeneratorRequest, RequestKind, ResponseStatus};
use fdvied::dataset::{build_dataset, verify_dataset, BuildConfig, CaseCount, GeneratorChoice, MANIFEST_FILE};
use fdvied::patterns::{GeneratorKind, MethodFamily};
use fdvied::raster::{DocumentImage, Mask, Region};
use fdvied::synth::synth_corpus;
use fdvied::CaseKey;

const STUB: &str = env!("CARGO_BIN_EXE_fdvied-stub-gen");

fn stub(mode: &str) -> CommandSpec {
    CommandSpec::new(STUB).arg(mode)
}

fn page() -> DocumentImage {
    let mut buf = Vec::new();
    for y in 0..80u32 {
        for x in 0..96u32 {
            buf.extend_from_slice(&[(x * 2) as u8, (y * 3) as u8, 200]);
        }
    }
    DocumentImage::from_raw("p", 96, 80, buf).unwrap()
}

fn request(dir: &Path, mask: &Mask, kind: RequestKind) -> GeneratorRequest {
    let image_path = dir.join("image.png");
    let mask_path = dir.join("mask.png");
    page().save_png(&image_path).unwrap();
    mask.save_png(&mask_path).unwrap();
    GeneratorRequest {
        kind,
        image_path,
        mask_path,
        text: (kind == RequestKind::TextStyleTransfer).then(|| "680".to_string()),
        request_id: "r0001".into(),
    }
}

fn run(mode: &str, mask: &Mask) -> (tempfile::TempDir, Result<fdvied::bridge::GeneratorResponse, BridgeError>) {
    let dir = tempfile::tempdir().unwrap();
    let req = request(dir.path(), mask, RequestKind::Inpaint);
    let r = invoke_generator(&stub(mode), &req, &dir.path().join("scratch"), Duration::from_secs(20));
    (dir, r)
}

#[test]
fn identity_with_empty_mask_is_ok_and_byte_identical() {
    let (_d, r) = run("identity", &Mask::zeros(96, 80));
    let resp = r.unwrap();
    assert_eq!(resp.status, ResponseStatus::Ok);
    let out = DocumentImage::load("o", &resp.output_path).unwrap();
    assert_eq!(out.as_raw(), page().as_raw());
}

#[test]
fn wrong_size_is_protocol_violation() {
    let (_d, r) = run("wrong-size", &Mask::from_region(96, 80, Region::new(10, 10, 8, 8)));
    assert!(matches!(r, Err(BridgeError::ProtocolViolation(_))), "{r:?}");
}

#[test]
fn outside_mask_mutation_is_rejected() {
    let (_d, r) = run("mutate-outside", &Mask::from_region(96, 80, Region::new(10, 10, 8, 8)));
    match r {
        Err(BridgeError::OutsideMaskModified { count, x, y }) => {
            assert_eq!(count, 1);
            assert_eq!((x, y), (0, 0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn other_failure_modes() {
    let m = Mask::from_region(96, 80, Region::new(10, 10, 8, 8));
    assert!(matches!(run("crash", &m).1, Err(BridgeError::ProcessFailure(_))));
    assert!(matches!(run("no-response", &m).1, Err(BridgeError::ProtocolViolation(_))));
    assert!(matches!(run("wrong-id", &m).1, Err(BridgeError::ProtocolViolation(_))));
    assert_eq!(run("fail", &m).1.unwrap().status, ResponseStatus::Failed);

    let dir = tempfile::tempdir().unwrap();
    let req = request(dir.path(), &m, RequestKind::Inpaint);
    let r = invoke_generator(&stub("sleep:5000"), &req, &dir.path().join("s"), Duration::from_secs(1));
    assert!(matches!(r, Err(BridgeError::Timeout(_))), "{r:?}");

    let missing = invoke_generator(&CommandSpec::new("/nonexistent/generator"), &req, &dir.path().join("s2"), Duration::from_secs(5));
    assert!(matches!(missing, Err(BridgeError::ProcessFailure(_))));
}

#[test]
fn render_stub_inpaints_inside_the_mask_only() {
    let m = Mask::from_region(96, 80, Region::new(30, 20, 12, 9));
    let (_d, r) = run("render", &m);
    let out = DocumentImage::load("o", &r.unwrap().output_path).unwrap();
    let diff = out.diff_mask(&page()).unwrap();
    assert!(diff.is_subset_of(&m));
}

#[test]
fn generator_trait_over_the_bridge() {
    use fdvied::edit::BinaryMaskRegion;
    use fdvied::patterns::Generator;
    let dir = tempfile::tempdir().unwrap();
    let g = BridgeGenerator::new(stub("render"), dir.path().join("scratch"), Duration::from_secs(20));
    assert_eq!(g.kind(), GeneratorKind::ExternalBridge);
    let img = page();
    let out = g.inpaint(&img, &BinaryMaskRegion::full(Region::new(5, 5, 10, 6))).unwrap();
    assert_eq!((out.width(), out.height()), (96, 80));
    let s = g.text_image(&img, Region::new(20, 20, 30, 14), "680").unwrap();
    assert_eq!((s.w, s.h), (30, 14));
    assert!(s.foreground_count() > 0);

    let bad = BridgeGenerator::new(stub("mutate-outside"), dir.path().join("scratch2"), Duration::from_secs(20));
    assert!(bad.inpaint(&img, &BinaryMaskRegion::full(Region::new(5, 5, 10, 6))).is_err());
}

#[test]
fn dataset_build_through_bridge_skips_failures_and_stays_valid() {
    let corpus = synth_corpus(4, 9);
    let gen_cases: Vec<CaseCount> = CaseKey::ALL
        .iter()
        .filter(|c| c.method() != MethodFamily::CopyMove)
        .map(|&case| CaseCount { case, train: 1, test: 1 })
        .collect();

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = BuildConfig::new(gen_cases.clone(), 5);
    cfg.generator = GeneratorChoice::ExternalBridge { command: stub("render"), timeout_secs: 30 };
    let out = build_dataset(&cfg, &corpus, dir.path()).unwrap();
    assert_eq!(out.manifest.entries.len(), gen_cases.len() * 2);
    assert!(out.manifest.entries.iter().all(|e| e.record.generator == GeneratorKind::ExternalBridge));
    verify_dataset(&out.manifest, &dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(!dir.path().join(".bridge-scratch").exists());

    // A generator that always violates the protocol can never fill the quota,
    // and nothing half-written ends up in a manifest.
    let dir2 = tempfile::tempdir().unwrap();
    cfg.generator = GeneratorChoice::ExternalBridge { command: stub("mutate-outside"), timeout_secs: 30 };
    cfg.case_counts = vec![CaseCount { case: gen_cases[0].case, train: 1, test: 0 }];
    let err = build_dataset(&cfg, &corpus, dir2.path()).unwrap_err();
    assert!(matches!(err, fdvied::dataset::DatasetError::QuotaUnreachable { .. }), "{err}");
    assert!(!dir2.path().join(MANIFEST_FILE).exists());
    assert!(!dir2.path().join(".bridge-scratch").exists());
}
