use std::path::PathBuf;

use ssdual::architecture::{
    mamba2_block_forward, mamba2_block_forward_with, read_tensors, write_tensors, BlockConfig, BlockWeights, InnerLayer,
};
use ssdual::numeric::max_abs_diff;
use ssdual::rng::{normal_tensor, seeded};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn config() -> BlockConfig {
    BlockConfig { d: 16, inner: 32, heads: 4, groups: 2, state: 4, conv_width: 4, norm_groups: 2, chunk: 4 }
}

/// Set `SSDUAL_BLESS=1` to regenerate the fixture files.
#[test]
fn golden_block_output() {
    let weights_stem = fixture("block_t8_d16_weights");
    let io_stem = fixture("block_t8_d16_io");
    if std::env::var_os("SSDUAL_BLESS").is_some() {
        let w = BlockWeights::random(config(), 2024).unwrap();
        let u = normal_tensor(&mut seeded(7), &[8, 16]);
        let out = mamba2_block_forward(&w, &u).unwrap();
        w.save(&weights_stem).unwrap();
        write_tensors(&io_stem, &[("u", &u), ("out", &out)], None).unwrap();
    }

    let w = BlockWeights::load(&weights_stem).unwrap();
    assert_eq!(w, BlockWeights::random(config(), 2024).unwrap(), "seeded initialization drifted");
    let (io, _) = read_tensors(&io_stem).unwrap();
    let u = &io.iter().find(|(n, _)| n == "u").unwrap().1;
    let expected = &io.iter().find(|(n, _)| n == "out").unwrap().1;

    let out = mamba2_block_forward(&w, u).unwrap();
    assert_eq!(out.shape(), &[8, 16]);
    assert!(max_abs_diff(out.data(), expected.data()) < 1e-12);
    let oracle = mamba2_block_forward_with(&w, u, InnerLayer::Recurrent).unwrap();
    assert!(max_abs_diff(oracle.data(), expected.data()) < 1e-12);
}

#[test]
fn stream_is_little_endian_f64() {
    let stem = fixture("block_t8_d16_io");
    let bytes = std::fs::read(stem.with_extension("bin")).unwrap();
    let (io, _) = read_tensors(&stem).unwrap();
    assert_eq!(bytes.len(), 8 * io.iter().map(|(_, t)| t.len()).sum::<usize>());
    let first = f64::from_le_bytes(bytes[..8].try_into().unwrap());
    assert_eq!(first, io[0].1.data()[0]);
}
