use motif_forge_core::context::expert::{expert_context, ExpertRule};
use motif_forge_core::context::hmm::{hmm_decode, hmm_fit, HmmConfig};
use motif_forge_core::context::topic::motif_topic_context;
use motif_forge_core::mmm::MotifLabeling;
use motif_forge_core::rng;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use rand_distr::Normal;

/// Context by hand: mean of the last k differences at or above tau, dilated by w.
fn expert_oracle(v: &[f64], k: usize, tau: f64, w: usize) -> Vec<usize> {
    let n = v.len();
    let mut out = vec![0; n];
    for t in k..n {
        let rise = (v[t] - v[t - k]) / k as f64;
        if rise >= tau {
            for s in t.saturating_sub(w)..=(t + w).min(n - 1) {
                out[s] = 1;
            }
        }
    }
    out
}

#[test]
fn single_step_rise_marks_94_to_111() {
    let v: Vec<f64> = (0..288).map(|t| if t >= 100 { 160.0 } else { 100.0 }).collect();
    let seq = expert_context(&v, &ExpertRule { k: 6, tau: 10.0, dilation: 6 }).unwrap();
    let ones: Vec<usize> = (0..288).filter(|&t| seq.labels[t] == 1).collect();
    assert_eq!(ones, (94..=111).collect::<Vec<_>>());
}

#[test]
fn expert_matches_hand_simulation_and_ignores_offsets() {
    let mut r = rng::from_seed(12);
    for _ in 0..100 {
        let mut x = 120.0;
        let v: Vec<f64> = (0..288)
            .map(|_| {
                x += 16.0 * (r.random::<f64>() - 0.45);
                x
            })
            .collect();
        let rule = ExpertRule { k: 1 + r.random_range(0..8), tau: 3.0, dilation: r.random_range(0..5) };
        let got = expert_context(&v, &rule).unwrap();
        assert_eq!(got.labels, expert_oracle(&v, rule.k, rule.tau, rule.dilation));
        let shifted: Vec<f64> = v.iter().map(|x| x + 37.5).collect();
        assert_eq!(expert_context(&shifted, &rule).unwrap().labels, got.labels);
    }
}

fn two_state_data(n_segments: usize, len: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let a = [[0.95, 0.05], [0.1, 0.9]];
    let levels = [100.0, 220.0];
    let noise = Normal::new(0.0, 4.0).unwrap();
    let rows: Vec<WeightedIndex<f64>> = a.iter().map(|r| WeightedIndex::new(r).unwrap()).collect();
    let mut r = rng::from_seed(seed);
    let mut segs = Vec::new();
    let mut paths = Vec::new();
    for _ in 0..n_segments {
        let mut s = r.random_range(0..2);
        let mut v = Vec::with_capacity(len);
        let mut p = Vec::with_capacity(len);
        for _ in 0..len {
            p.push(s);
            v.push(levels[s] + noise.sample(&mut r));
            s = rows[s].sample(&mut r);
        }
        segs.push(v);
        paths.push(p);
    }
    (segs, paths)
}

#[test]
fn hmm_recovers_transitions_and_paths() {
    let (segs, paths) = two_state_data(30, 288, 6);
    let model = hmm_fit(&segs, &HmmConfig { seed: 2, ..HmmConfig::default() }).unwrap();
    model.check_invariants().unwrap();
    // State with the lower mean value plays the role of state 0.
    let order: Vec<usize> = if model.means[0][0] <= model.means[1][0] { vec![0, 1] } else { vec![1, 0] };
    let truth = [[0.95, 0.05], [0.1, 0.9]];
    for i in 0..2 {
        for j in 0..2 {
            let got = model.transition[order[i]][order[j]];
            assert!((got - truth[i][j]).abs() < 0.1, "A[{i}][{j}] = {got}");
        }
    }
    for (v, p) in segs.iter().zip(&paths) {
        let decoded = hmm_decode(&model, v);
        let mapped: Vec<usize> = decoded.labels.iter().map(|&s| order.iter().position(|&o| o == s).unwrap()).collect();
        assert_eq!(&mapped, p);
    }
}

#[test]
fn hmm_fit_is_seeded() {
    let (segs, _) = two_state_data(5, 100, 1);
    let cfg = HmmConfig { seed: 4, ..HmmConfig::default() };
    assert_eq!(hmm_fit(&segs, &cfg).unwrap(), hmm_fit(&segs, &cfg).unwrap());
}

#[test]
fn topic_context_separates_planted_profiles() {
    // Profile A favours motifs 1 and 2, profile B motifs 3 and 4; 12 windows per context window.
    let profiles = [[0.1, 0.4, 0.4, 0.05, 0.05], [0.1, 0.05, 0.05, 0.4, 0.4]];
    let dists: Vec<WeightedIndex<f64>> = profiles.iter().map(|p| WeightedIndex::new(p).unwrap()).collect();
    let mut r = rng::from_seed(31);
    let mut labelings = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..20 {
        let mut labels = Vec::new();
        let mut ctx = Vec::new();
        for _ in 0..6 {
            let c = r.random_range(0..2);
            ctx.push(c);
            labels.extend((0..12).map(|_| dists[c].sample(&mut r)));
        }
        labelings.push(MotifLabeling { motif_len: 4, labels });
        truth.push(ctx);
    }
    let topic = motif_topic_context(&labelings, 4, 48, 2, 7).unwrap();
    for g in &topic.gamma {
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let flip = topic.gamma[0][1] < topic.gamma[0][3];
    let (mut right, mut total) = (0, 0);
    for (seq, t) in topic.labels.iter().zip(&truth) {
        for (&got, &want) in seq.labels.iter().zip(t) {
            total += 1;
            right += usize::from((got == 1) == (flip ^ (want == 1)));
        }
    }
    assert!(right as f64 >= 0.95 * total as f64, "{right} of {total}");
}
