//! The static page must only call functions the crate exports.

const PAGE: &str = include_str!("../www/index.html");
const BINDINGS: &str = include_str!("../src/lib.rs");

#[test]
fn page_imports_exported_bindings() {
    let import = PAGE
        .lines()
        .find(|l| l.starts_with("import init"))
        .expect("module import");
    let names = import
        .split('{')
        .nth(1)
        .and_then(|s| s.split('}').next())
        .expect("named imports");
    for name in names.split(',').map(str::trim) {
        assert!(
            BINDINGS.contains(&format!("js_name = {name})")),
            "page imports `{name}` but the crate does not export it"
        );
    }
    assert!(import.contains("./pkg/mbg_demo.js"));
}

#[test]
fn convergence_runs_from_outside_the_crate() {
    let c = mbg_demo::cournot_convergence(3, 10.0, 0.1, 500, 1).unwrap();
    assert_eq!(c.t.last(), Some(&500));
    assert!(c.barrier.iter().chain(&c.fkm).all(|v| v.is_finite() && *v >= 0.0));
}
