use std::collections::BTreeSet;

use cvep::codes::*;
use proptest::prelude::*;

fn bits(len: std::ops::Range<usize>) -> impl Strategy<Value = BitSequence> {
    prop::collection::vec(0u8..=1, len).prop_map(|b| BitSequence::new(b, 30.0, "p").unwrap())
}

proptest! {
    #[test]
    fn modulation_doubles_rate_and_length(code in bits(1..200)) {
        let m = modulate(&code).unwrap();
        prop_assert_eq!(m.len(), 2 * code.len());
        prop_assert_eq!(m.rate_hz(), 2.0 * code.rate_hz());
        prop_assert_eq!(m.count_ones(), code.len());
    }

    #[test]
    fn modulated_flashes_last_at_most_two_frames(code in bits(1..200)) {
        let m = modulate(&code).unwrap();
        prop_assert!(m.max_cyclic_run_of_ones() <= 2);
        let doubled = format!("{0}{0}", m.to_bit_string());
        prop_assert!(!doubled.contains("111"));
    }

    #[test]
    fn modulation_is_invertible(code in bits(1..200)) {
        let m = modulate(&code).unwrap();
        let even: Vec<u8> = m.bits().iter().step_by(2).copied().collect();
        prop_assert_eq!(even.as_slice(), code.bits());
        prop_assert!(m.bits().chunks(2).all(|p| p[0] != p[1]));
    }

    #[test]
    fn flash_runs_follow_source_runs(code in bits(1..200)) {
        prop_assume!(code.count_ones() < code.len());
        let n = code.len();
        let src = code.bits();
        let source_runs = (0..n).filter(|&i| src[i] == 1 && src[(i + n - 1) % n] == 0).count();
        let m = modulate(&code).unwrap();
        let mb = m.bits();
        let mn = mb.len();
        let (mut short, mut long) = (0, 0);
        for i in 0..mn {
            if mb[i] == 1 && mb[(i + mn - 1) % mn] == 0 {
                if mb[(i + 1) % mn] == 1 { long += 1 } else { short += 1 }
            }
        }
        // Each source bit lights one frame; a long flash joins the lit frame
        // of a 0 with that of the following 1.
        prop_assert_eq!(long, source_runs);
        prop_assert_eq!(short, n - 2 * source_runs);
    }

    #[test]
    fn correlation_symmetry(pair in (1usize..100).prop_flat_map(|n| (bits(n..n + 1), bits(n..n + 1))), lag in -300i64..300) {
        let (a, b) = pair;
        let ab = circular_correlation(&a, &b, lag).unwrap();
        let ba = circular_correlation(&b, &a, -lag).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
        prop_assert!((circular_correlation(&a, &a, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_shifts_correlation(code in bits(2..80), shift in 0usize..200, lag in 0i64..80) {
        let rotated = code.rotated(shift % code.len());
        let direct = circular_correlation(&code, &rotated, lag).unwrap();
        let via_lag = circular_correlation(&code, &code, lag + (shift % code.len()) as i64).unwrap();
        prop_assert!((direct - via_lag).abs() < 1e-12);
    }
}

/// Brute-force circular cross-correlation in ±1 form, counting matches.
fn raw_xcorr(a: &[u8], b: &[u8], lag: usize) -> i64 {
    let n = a.len();
    (0..n)
        .map(|i| if a[i] == b[(i + lag) % n] { 1 } else { -1 })
        .sum()
}

#[test]
fn gold_family_is_three_valued() {
    let (a, b) = default_preferred_pair();
    let set = gold_code_set(&a, &b).unwrap();
    assert_eq!(set.len(), 65);
    let mut values = BTreeSet::new();
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            for lag in 0..63 {
                values.insert(raw_xcorr(set[i].bits(), set[j].bits(), lag));
            }
        }
    }
    assert_eq!(values.into_iter().collect::<Vec<_>>(), vec![-17, -1, 15]);
}

#[test]
fn m_sequences_have_two_valued_autocorrelation() {
    let (a, b) = default_preferred_pair();
    for spec in [a, b] {
        let m = lfsr_msequence(&spec).unwrap();
        assert_eq!(m.len(), 63);
        assert_eq!(m.count_ones(), 32);
        for lag in 1..63 {
            assert_eq!(raw_xcorr(m.bits(), m.bits(), lag), -1);
        }
    }
}

#[test]
fn every_nonzero_seed_gives_a_shift_of_the_same_sequence() {
    let base = lfsr_msequence(&LfsrSpec::new(6, vec![6, 1], 1).unwrap()).unwrap();
    let forms: BTreeSet<String> = (0..63).map(|s| base.rotated(s).to_bit_string()).collect();
    for seed in 1..64 {
        let m = lfsr_msequence(&LfsrSpec::new(6, vec![6, 1], seed).unwrap()).unwrap();
        assert!(forms.contains(&m.to_bit_string()), "seed {seed}");
    }
    assert!(LfsrSpec::new(6, vec![6, 1], 0).is_err());
}

#[test]
fn selected_pair_has_near_zero_correlation() {
    let pair = default_code_pair().unwrap();
    assert_eq!(pair.left.len(), 126);
    assert_eq!(pair.shift_bits, 61);
    let rho = circular_correlation(&pair.left, &pair.right, 0).unwrap();
    // Inner products of even-length ±1 sequences are even, so 2/126 is the
    // smallest non-zero magnitude.
    assert!(rho.abs() <= 2.0 / 126.0 + 1e-12, "rho {rho}");

    let (a, b) = default_preferred_pair();
    let set: Vec<BitSequence> = gold_code_set(&a, &b).unwrap().iter().map(|c| modulate(c).unwrap()).collect();
    let mut pairwise: Vec<f64> = Vec::new();
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            pairwise.push(circular_correlation(&set[i], &set[j], 0).unwrap().abs());
        }
    }
    pairwise.sort_by(f64::total_cmp);
    let median = pairwise[pairwise.len() / 2];
    // Magnitudes come in steps of 1/63 and the median already sits at the
    // smallest one, which the selected pair attains.
    assert!(rho.abs() <= median + 1e-12, "rho {rho} median {median}");
    assert!((rho.abs() - pairwise[0]).abs() < 1e-12);
    assert_eq!(pair.right.bits(), pair.left.rotated(61).bits());
}
