use ces_core::geometry::{MeshResolution, PoreShape};
use ces_core::pipeline::{split_of, DatasetDir, Labeler, LabelerConfig, RecordMeta, SampleRecord, Source, Split};

fn labeled(scale: f64) -> SampleRecord {
    let l = Labeler::new(PoreShape::circular(), LabelerConfig { resolution: MeshResolution::new(8, 2), ..Default::default() }).unwrap();
    let u: Vec<f64> = (0..72).map(|i| scale * ((i as f64) * 0.7).sin()).collect();
    let label = l.label(&u, None).unwrap().expect("small data converges");
    SampleRecord { u, xi: [0.0, 0.0], energy: label.energy, grad: label.grad, hessian: label.hessian, source: Source::Hmc, meta: RecordMeta::default() }
}

#[test]
fn labeled_records_round_trip_through_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let ds = DatasetDir::new(dir.path(), 72);
    ds.init().unwrap();
    let records: Vec<SampleRecord> = [0.002, 0.004, 0.006].iter().map(|&s| labeled(s)).collect();
    let first = ds.append(Split::Train, &records[..2]).unwrap();
    let second = ds.append(Split::Val, &records[2..]).unwrap();
    assert_ne!(first.hash, second.hash);
    let data = ds.load().unwrap();
    assert_eq!(data.train, records[..2]);
    assert_eq!(data.val, records[2..]);
    assert_eq!(data.manifest, second);
    assert!(records.windows(2).all(|w| w[0].energy < w[1].energy));
}

#[test]
fn every_twelfth_record_is_held_out() {
    let val: Vec<usize> = (0..36).filter(|&i| split_of(i) == Split::Val).collect();
    assert_eq!(val, vec![11, 23, 35]);
}
