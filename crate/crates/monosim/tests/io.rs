use monosim::io::*;
use monosim_core::synth::{generate, GroundTruth, NoiseModel};
use monosim_core::{Activation, Dataset, Hypothesis};

fn sample() -> Dataset {
    let truth = GroundTruth::new(&[0.6, 0.8], Activation::relu(), NoiseModel::None, 5.0).unwrap();
    generate(&truth, 25, 2, 3).unwrap()
}

#[test]
fn text_round_trip_is_exact() {
    let data = sample();
    let text = encode_text(&data);
    assert!(text.starts_with("d=2 n=25\n"));
    assert_eq!(decode_text(&text).unwrap(), data);
}

#[test]
fn binary_round_trip_is_exact() {
    let data = sample();
    let bytes = encode_binary(&data);
    assert_eq!(bytes.len(), 16 + 25 * 3 * 8);
    assert_eq!(&bytes[..8], &2u64.to_le_bytes());
    assert_eq!(decode_binary(&bytes).unwrap(), data);
}

#[test]
fn files_pick_format_by_extension_and_detect_on_read() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample();
    for name in ["a.dat", "b.bin", "c.txt"] {
        let p = dir.path().join(name);
        write_dataset(&p, &data).unwrap();
        let raw = std::fs::read(&p).unwrap();
        assert_eq!(raw.starts_with(b"d="), !name.ends_with(".bin"), "{name}");
        assert_eq!(read_dataset(&p).unwrap(), data);
    }
    // Content decides on read, whatever the name says.
    let p = dir.path().join("mislabelled.bin");
    std::fs::write(&p, encode_text(&data)).unwrap();
    assert_eq!(read_dataset(&p).unwrap(), data);
}

#[test]
fn malformed_text_is_rejected() {
    assert!(decode_text("").is_err());
    assert!(decode_text("d=2\n1 2 3\n").is_err());
    assert!(decode_text("d=2 n=2\n1 2 3\n").is_err());
    assert!(decode_text("d=2 n=1\n1 2\n").is_err());
    assert!(decode_text("d=2 n=1\n1 x 3\n").is_err());
    assert!(decode_text("d=2 n=1\n1 NaN 3\n").is_err());
    assert!(decode_text("d=0 n=0\n").is_err());
    let ok = decode_text("d=1 n=2\n\n0.5 1\n-1e-3 2.5\n").unwrap();
    assert_eq!(ok.xs(), &[0.5, -1e-3]);
    assert_eq!(ok.ys(), &[1.0, 2.5]);
}

#[test]
fn malformed_binary_is_rejected() {
    let mut bytes = encode_binary(&sample());
    bytes.pop();
    assert!(decode_binary(&bytes).is_err());
    assert!(decode_binary(&[0u8; 10]).is_err());
}

#[test]
fn hypothesis_json_has_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.json");
    let h =
        Hypothesis { w: vec![0.6, 0.8], knots: vec![-1.0, 0.0, 2.0], values: vec![0.0, 0.0, 1.5], beta: 3.0, b: 2.0 };
    write_hypothesis(&p, &h).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    keys.sort();
    assert_eq!(keys, ["B", "beta", "dim", "knots", "values", "w"]);
    assert_eq!(v["dim"], 2);
    assert_eq!(read_hypothesis(&p).unwrap(), h);
}

#[test]
fn inconsistent_hypothesis_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.json");
    for body in [
        r#"{"dim":3,"w":[1,0],"knots":[0],"values":[1],"beta":1,"B":1}"#,
        r#"{"dim":1,"w":[1],"knots":[0,1],"values":[1],"beta":1,"B":1}"#,
        r#"{"dim":1,"w":[1],"knots":[0,1],"values":[1,0],"beta":1,"B":1}"#,
    ] {
        std::fs::write(&p, body).unwrap();
        assert!(read_hypothesis(&p).is_err(), "{body}");
    }
}

#[test]
fn truth_sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("train.bin");
    let side = sidecar_path(&data_path);
    assert_eq!(side.file_name().unwrap(), "train.bin.truth.json");
    let truth = GroundTruth::new(
        &[1.0, 1.0],
        Activation::BiasedThreshold { bias: 0.5 },
        NoiseModel::SignFlipTail { rate: 0.1 },
        1.0,
    )
    .unwrap();
    let file = TruthFile { truth, n: 10, seed: 4, opt_estimate: 0.25 };
    write_truth(&side, &file).unwrap();
    assert_eq!(read_truth(&side).unwrap(), file);
}

#[test]
fn json_lines_emit_one_object_per_line() {
    let mut buf = Vec::new();
    let mut sink = JsonLines::new(&mut buf);
    sink.emit(&serde_json::json!({"a": 1})).unwrap();
    sink.emit(&serde_json::json!({"b": [1, 2]})).unwrap();
    sink.finish().unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "{\"a\":1}\n{\"b\":[1,2]}\n");
}
