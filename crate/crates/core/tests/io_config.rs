use std::path::PathBuf;

use lamination_core::charts::BoxChart;
use lamination_core::config::{ProfileChoice, RunConfig};
use lamination_core::error::Error;
use lamination_core::mesh::io::{parse_obj, read_mesh, sidecar_path, write_mesh};
use lamination_core::mesh::{initial_annulus, slice_mesh};
use lamination_core::solver::Method;
use proptest::prelude::*;

#[test]
fn mesh_files_round_trip_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let chart = BoxChart::new(2, 0.3).unwrap();
    let mut mesh = initial_annulus(&chart, 16, 33).unwrap();
    for (i, v) in mesh.vertices.iter_mut().enumerate() {
        v.z += 1e-3 * (i as f64).sqrt();
    }
    let path = dir.path().join("m.obj");
    write_mesh(&mesh, &path, serde_json::json!({ "n": 2 })).unwrap();
    assert!(sidecar_path(&path).exists());
    let (back, prov) = read_mesh(&path).unwrap();
    assert_eq!(back, mesh);
    assert_eq!(prov["n"], 2);
}

#[test]
fn missing_or_inconsistent_sidecar_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.obj");
    write_mesh(&slice_mesh(8, 16, 0.1).unwrap(), &path, serde_json::Value::Null).unwrap();
    let other = dir.path().join("t.obj");
    write_mesh(&slice_mesh(4, 16, 0.1).unwrap(), &other, serde_json::Value::Null).unwrap();
    std::fs::copy(sidecar_path(&other), sidecar_path(&path)).unwrap();
    assert!(matches!(read_mesh(&path), Err(Error::Format(_))));
    std::fs::remove_file(sidecar_path(&path)).unwrap();
    assert!(read_mesh(&path).is_err());
}

#[test]
fn malformed_obj_is_rejected() {
    assert!(parse_obj("v 1 2\n").is_err());
    assert!(parse_obj("v 1 2 3\nf 1 1 0\n").is_err());
    assert!(parse_obj("v 1 2 3\nf 1 2 3\n").is_err());
    assert!(parse_obj("v a b c\n").is_err());
    let (v, t) = parse_obj("# c\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n").unwrap();
    assert_eq!((v.len(), t), (3, vec![[0, 1, 2]]));
}

#[test]
fn config_errors_carry_line_numbers() {
    match RunConfig::parse("eps0 = 0.3\n\nspeed = 3\n") {
        Err(Error::Config(m)) => assert!(m.contains("line 3"), "{m}"),
        other => panic!("{other:?}"),
    }
    match RunConfig::parse("rings = 32\nrings = 16\n") {
        Err(Error::Config(m)) => assert!(m.contains("line 2") && m.contains("duplicate"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn config_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "profile = product\nn_list = 3\nout_dir = runs/p\n").unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.profile, ProfileChoice::Product);
    assert_eq!(cfg.n_list, vec![3]);
    assert_eq!(cfg.out_dir, PathBuf::from("runs/p"));
    assert!(RunConfig::load(&dir.path().join("missing.cfg")).is_err());
}

#[test]
fn shipped_configs_parse() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        prop::collection::vec(1u32..6, 1..4),
        0.05f64..0.7,
        0usize..4,
        16usize..80,
        16usize..80,
        prop::bool::ANY,
        0u64..1000,
        prop::option::of(prop::collection::vec(0.01f64..0.2, 2..4)),
    )
        .prop_map(|(n_list, eps0, halvings, rings, lpw, gradient, seed, cosine)| RunConfig {
            n_list,
            eps0,
            halvings,
            rings,
            levels_per_wrap: lpw,
            method: if gradient { Method::Gradient } else { Method::Ncg },
            seed,
            profile: match cosine {
                Some(mut c) => {
                    c.insert(0, 1.0);
                    ProfileChoice::Cosine(c)
                }
                None => ProfileChoice::Standard,
            },
            ..RunConfig::default()
        })
}

proptest! {
    #[test]
    fn text_form_round_trips(cfg in arb_config()) {
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn hash_tracks_semantic_fields_only(cfg in arb_config(), rings in 16usize..80, threads in 0usize..16, dir in "[a-z]{1,8}") {
        let moved = RunConfig { out_dir: dir.into(), threads, ..cfg.clone() };
        prop_assert_eq!(moved.hash(), cfg.hash());
        let changed = RunConfig { rings, ..cfg.clone() };
        prop_assert_eq!(changed.hash() == cfg.hash(), rings == cfg.rings);
    }
}
