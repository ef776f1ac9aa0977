//! The self-check suite behind `tscm verify` passes on a clean build.

#[test]
fn every_check_passes() {
    let report = tscm::verify::run_all().unwrap();
    let mut out = Vec::new();
    report.write(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    println!("{text}");
    assert!(report.passed(), "{text}");
    assert!(text.contains("negative control"));
}
