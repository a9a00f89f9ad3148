mod common;

use common::{random_matrix, random_net};
use proptest::prelude::*;
use snf_core::codec::{decode_prefix, pack, pack_with, split_messages, DecodeError, Precision, StreamDecoder};
use snf_core::RngState;

#[test]
fn every_prefix_decodes_bit_exactly() {
    let mut rng = RngState::new(17);
    for _ in 0..10 {
        let net = random_net(&mut rng, 3, 16, 3);
        let coords = random_matrix(20, net.in_dim(), &mut rng);
        let bytes = pack(&net);
        for k in 1..=net.num_stages() {
            let decoded = decode_prefix(&bytes, k).unwrap();
            assert_eq!(decoded.num_stages(), k);
            for s in 1..=k {
                assert_eq!(decoded.stage(s).unwrap().blocks(), net.stage(s).unwrap().blocks());
            }
            let a = decoded.forward(&coords, k).unwrap();
            let b = net.forward(&coords, k).unwrap();
            assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn every_single_byte_corruption_is_detected() {
    let mut rng = RngState::new(4);
    let net = random_net(&mut rng, 2, 8, 3);
    let bytes = pack(&net);
    let k = net.num_stages();
    for i in 0..bytes.len() {
        for flip in [0x01u8, 0x80, 0xff] {
            let mut bad = bytes.clone();
            bad[i] ^= flip;
            assert!(decode_prefix(&bad, k).is_err(), "flip {flip:#x} at byte {i} went unnoticed");
        }
    }
}

#[test]
fn payload_corruption_names_its_chunk_and_spares_the_prefix() {
    let mut rng = RngState::new(6);
    let net = snf_core::StreamableNet::with_stages(
        2,
        3,
        2,
        &[3, 5, 9],
        snf_core::ActivationConfig::default(),
        snf_core::GrowInit::Siren,
        &mut rng,
    )
    .unwrap();
    let bytes = pack(&net);
    let (header, msgs) = split_messages(&bytes).unwrap();
    let start_of_chunk_2: usize = msgs[..2].iter().map(|m| m.len()).sum();
    let mut bad = bytes.clone();
    bad[start_of_chunk_2 + 10 + header.payload_len(1) / 2] ^= 0x10;
    assert!(matches!(decode_prefix(&bad, 3), Err(DecodeError::Crc { stage: 2, .. })));
    assert!(matches!(decode_prefix(&bad, 2), Err(DecodeError::Crc { stage: 2, .. })));
    assert_eq!(decode_prefix(&bad, 1).unwrap(), decode_prefix(&bytes, 1).unwrap());
}

#[test]
fn streaming_decoder_matches_decode_prefix() {
    let mut rng = RngState::new(8);
    let net = random_net(&mut rng, 3, 12, 3);
    let bytes = pack(&net);
    let (_, msgs) = split_messages(&bytes).unwrap();
    let (mut dec, used) = StreamDecoder::new(msgs[0]).unwrap();
    assert_eq!(used, msgs[0].len());
    for (k, chunk) in msgs[1..].iter().enumerate() {
        assert_eq!(dec.push_chunk(chunk).unwrap(), chunk.len());
        assert_eq!(dec.net().unwrap(), decode_prefix(&bytes, k + 1).unwrap());
    }
}

#[test]
fn f32_streams_are_close_but_smaller() {
    let mut rng = RngState::new(12);
    let net = random_net(&mut rng, 2, 10, 2);
    let coords = random_matrix(10, net.in_dim(), &mut rng);
    let full = pack(&net);
    let half = pack_with(&net, Precision::F32);
    assert_eq!(full.len() - half.len(), 4 * net.total_params());
    let k = net.num_stages();
    let d = decode_prefix(&half, k).unwrap();
    assert!(d.forward(&coords, k).unwrap().max_abs_diff(&net.forward(&coords, k).unwrap()) < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truncated_streams_decode_exactly_their_complete_chunks(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let mut rng = RngState::new(seed);
        let net = random_net(&mut rng, 3, 12, 3);
        let bytes = pack(&net);
        let (_, msgs) = split_messages(&bytes).unwrap();
        let at = (cut * bytes.len() as f64) as usize;
        let mut complete = 0;
        let mut end = msgs[0].len();
        for m in &msgs[1..] {
            if end + m.len() > at {
                break;
            }
            end += m.len();
            complete += 1;
        }
        let prefix = &bytes[..at];
        for k in 1..=net.num_stages() {
            let res = decode_prefix(prefix, k);
            if k <= complete {
                prop_assert_eq!(res.unwrap(), decode_prefix(&bytes, k).unwrap());
            } else {
                prop_assert!(res.is_err());
            }
        }
    }
}
