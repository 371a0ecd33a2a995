use merklespeech_core::dsp::{apply_transform, chunk_audio, AudioBuffer, Mfcc, MfccConfig, Stft, StftConfig, TransformSpec};
use merklespeech_core::manifest::Params;
use merklespeech_core::merkle::{verify, MerkleTree};
use merklespeech_core::payload::{self, rs, Cid, Interleaver, PayloadFields, MAX_INDEX};
use merklespeech_core::watermark::{qim_decide, qim_quantize};
use proptest::prelude::*;

fn fields() -> impl Strategy<Value = PayloadFields> {
    (any::<[u8; 16]>(), 0..=MAX_INDEX, any::<u64>(), any::<u16>())
        .prop_map(|(cid, index, rid, kid)| PayloadFields { version: 1, cid: Cid(cid), index, rid, kid })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn payload_pack_round_trip(f in fields()) {
        let packed = payload::pack(&f).unwrap();
        prop_assert_eq!(payload::unpack(&packed).unwrap(), f);
    }

    #[test]
    fn channel_round_trip_with_byte_errors(
        f in fields(),
        key in any::<u64>(),
        errors in proptest::collection::btree_map(0usize..rs::CODEWORD_LEN, 1u8..=255, 0..=rs::CAPACITY),
    ) {
        let il = Interleaver::new(key);
        let mut word = rs::encode(&payload::pack(&f).unwrap());
        for (&pos, &e) in &errors {
            word[pos] ^= e;
        }
        let d = payload::decode_word(&word).unwrap();
        prop_assert_eq!(d.fields, f);
        prop_assert_eq!(d.corrected_bytes, errors.len());
        let bits = payload::encode_bits(&f, &il).unwrap();
        prop_assert_eq!(payload::decode_bits(&bits, &il).unwrap().fields, f);
    }

    #[test]
    fn interleaver_is_a_bijection(key in any::<u64>(), bits in proptest::array::uniform32(any::<bool>())) {
        let il = Interleaver::new(key);
        let mut full = [false; payload::CODEWORD_BITS];
        for (i, b) in full.iter_mut().enumerate() {
            *b = bits[i % 32] ^ (i % 3 == 0);
        }
        prop_assert_eq!(il.deinterleave(&il.interleave(&full)), full);
    }

    #[test]
    fn merkle_proofs_sound(leaves in proptest::collection::vec(any::<[u8; 32]>(), 1..64), pick in any::<usize>(), flip in 0usize..256) {
        let tree = MerkleTree::build(leaves.clone()).unwrap();
        let i = pick % leaves.len();
        let proof = tree.proof(i).unwrap();
        prop_assert!(verify(&leaves[i], &proof, &tree.root()));
        let mut bad = leaves[i];
        bad[flip / 8] ^= 1 << (flip % 8);
        prop_assert!(!verify(&bad, &proof, &tree.root()));
    }

    #[test]
    fn qim_decision_inverts_quantiser(x in -30.0f64..30.0, alpha in 0.05f64..2.0, bit: bool) {
        prop_assert_eq!(qim_decide(qim_quantize(x, alpha, bit), alpha), bit);
    }

    #[test]
    fn params_canonical_form_is_stable(alpha in 0.01f64..3.0, redundancy in 1usize..32, kid: u16) {
        let mut p = Params::for_kid(kid);
        p.qim.alpha = alpha;
        p.qim.redundancy = redundancy;
        let bytes = p.canonical_json().unwrap();
        let back: Params = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(back.canonical_json().unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stft_round_trip(seed in any::<u64>(), len in 1024usize..6000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let stft = Stft::new(StftConfig::default()).unwrap();
        let y = stft.inverse(&stft.forward(&x).unwrap(), len);
        prop_assert_eq!(y.len(), len);
        // only samples covered by two or more frames are reconstructible
        let covered = StftConfig::default().frame_count(len) * 256 + 768;
        let err: f64 = x[256..covered - 256].iter().zip(&y[256..covered - 256]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let rms = (err / (covered - 512) as f64).sqrt();
        prop_assert!(rms < 1e-6, "rms {}", rms);
    }

    #[test]
    fn mfcc_is_polarity_invariant(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..4096).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let mfcc = Mfcc::new(
            MfccConfig { n_mfcc: 13, n_mels: 40, fmin_hz: 0.0, fmax_hz: 8000.0, sample_rate: 16_000 },
            StftConfig::default(),
        ).unwrap();
        prop_assert_eq!(mfcc.frames(&x).unwrap(), mfcc.frames(&neg).unwrap());
    }

    #[test]
    fn transforms_preserve_length(seed in any::<u64>(), len in 2000usize..9000, which in 0usize..6) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let audio = AudioBuffer::new((0..len).map(|_| rng.gen_range(-0.5f32..0.5)).collect(), 16_000);
        let spec = [
            TransformSpec::Identity,
            TransformSpec::Noise { snr_db: 20.0, seed },
            TransformSpec::Resample { rate_hz: 8_000 },
            TransformSpec::Bandpass { low_hz: 300.0, high_hz: 3400.0 },
            TransformSpec::Clip { threshold: 0.3 },
            TransformSpec::Reverb { rt60_s: 0.3, seed },
        ][which];
        let out = apply_transform(&audio, &spec).unwrap();
        prop_assert_eq!(out.len(), len);
        prop_assert_eq!(out.sample_rate, 16_000);
        prop_assert_eq!(spec.to_string().parse::<TransformSpec>().unwrap(), spec);
    }

    #[test]
    fn chunks_tile_the_prefix(len in 0usize..200_000) {
        let audio = AudioBuffer::new((0..len).map(|i| (i % 97) as f32 / 97.0).collect(), 16_000);
        let chunks = chunk_audio(&audio, 2.0, 2.0).unwrap();
        prop_assert_eq!(chunks.len(), len / 32_000);
        let joined: Vec<f32> = chunks.iter().flat_map(|c| c.samples.iter().copied()).collect();
        prop_assert_eq!(&joined[..], &audio.samples[..chunks.len() * 32_000]);
    }
}
