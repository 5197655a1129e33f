use covclust::chain::PhaseSchedule;
use covclust::error::Error;
use covclust::io::{read_archive, rle_decode, rle_encode, ArchiveWriter, Manifest, RunStatus, ARCHIVE_FORMAT};
use covclust::kernels::KernelSpec;
use covclust::model::Phase;
use covclust::posterior::Snapshot;
use proptest::prelude::*;

fn manifest() -> Manifest {
    Manifest {
        format: ARCHIVE_FORMAT,
        version: "test".into(),
        config_hash: "abc".into(),
        seed: 5,
        m: 4,
        k: 2,
        p: 1,
        kernel: KernelSpec::compound_symmetry(),
        schedule: PhaseSchedule { burnin1: 1, burnin2: 1, sampling: 2 },
        thin: 1,
        status: RunStatus::Running,
        abort: None,
    }
}

fn snap(iteration: usize, z: Vec<usize>) -> Snapshot {
    Snapshot {
        iteration,
        phase: Phase::Sampling,
        z,
        alpha: 1.25,
        sigma2: vec![1.0, 0.1 + iteration as f64],
        rho: vec![0.3, 1.0 / 3.0],
        b: Some(vec![vec![0.5]; 4]),
    }
}

#[test]
fn archive_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = ArchiveWriter::create(dir.path(), manifest()).unwrap();
    let snaps = vec![snap(1, vec![0, 0, 1, 1]), snap(2, vec![0, 1, 0, 1]), snap(4, vec![0, 0, 0, 1])];
    for s in &snaps {
        w.append(s).unwrap();
    }
    w.finish(RunStatus::Complete, None).unwrap();
    let (m, back) = read_archive(dir.path()).unwrap();
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(back, snaps);
}

#[test]
fn archive_rejects_non_increasing_iterations_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = ArchiveWriter::create(dir.path(), manifest()).unwrap();
    w.append(&snap(3, vec![0, 0, 1, 1])).unwrap();
    assert!(matches!(w.append(&snap(3, vec![0, 0, 1, 1])), Err(Error::Numerical(_))));
    w.finish(RunStatus::Aborted, Some("stopped".into())).unwrap();
    let (m, back) = read_archive(dir.path()).unwrap();
    assert_eq!((m.status, m.abort.as_deref(), back.len()), (RunStatus::Aborted, Some("stopped"), 1));
}

proptest! {
    #[test]
    fn rle_round_trips(z in prop::collection::vec(0usize..5, 0..60)) {
        let runs = rle_encode(&z);
        prop_assert!(runs.windows(2).all(|w| w[0][0] != w[1][0]));
        prop_assert_eq!(rle_decode(&runs), z);
    }
}
