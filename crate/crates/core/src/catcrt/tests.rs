use rand::{Rng as _, SeedableRng};

use super::*;
use crate::rng::Rng;

fn toy() -> (Critic, ModelParams, MobilityMatrix) {
    let cfg = CriticConfig {
        hours: 4,
        encoding_dim: 2,
        heads: 2,
        conv_channels: 3,
        cond_dim: 3,
        head_hidden: 4,
    };
    let c = Critic::new(cfg).unwrap();
    let p = c.init_params(1);
    let mut m = MobilityMatrix::zeros("m", 4, 8);
    for h in 0..4 {
        m.slice_mut(h)[h * 9] = 0.75;
        m.slice_mut(h)[63 - h] = 0.25;
    }
    (c, p, m)
}

fn traj(cells: &[usize]) -> DailyTrajectory {
    DailyTrajectory {
        user_id: "u".into(),
        day: 0,
        cells: cells.iter().map(|&i| Cell::from_index(i, 8)).collect(),
    }
}

#[test]
fn zero_head_scores_zero() {
    let (c, mut p, m) = toy();
    for k in ["crt.head2.w", "crt.head2.b"] {
        let shape = p.get(k).unwrap().shape().to_vec();
        p.set(k, Tensor::zeros(&shape));
    }
    for t in [traj(&[0, 9, 18, 27]), traj(&[63, 62, 61, 60])] {
        assert_eq!(c.critic_forward(&t, &m, &p).unwrap(), 0.0);
    }
}

#[test]
fn deterministic_scores_and_gap_properties() {
    let (c, p, m) = toy();
    let a = traj(&[0, 9, 18, 27]);
    let b = traj(&[63, 9, 61, 27]);
    assert_eq!(c.critic_forward(&a, &m, &p).unwrap(), c.critic_forward(&a, &m, &p).unwrap());
    let batch = vec![a.clone(), b.clone()];
    assert_eq!(c.critic_batch_gap(&batch, &batch, &m, &p).unwrap(), 0.0);
    let g1 = c.critic_batch_gap(&[a.clone()], &[b.clone()], &m, &p).unwrap();
    let g2 = c.critic_batch_gap(&[b.clone()], &[a.clone()], &m, &p).unwrap();
    assert_eq!(g1, -g2);
    // Oracle: direct arithmetic on individual scores.
    let (sa, sb) = (c.critic_forward(&a, &m, &p).unwrap(), c.critic_forward(&b, &m, &p).unwrap());
    let gap = c.critic_batch_gap(&[a.clone(), a.clone()], &[b.clone(), a.clone()], &m, &p).unwrap();
    assert!((gap - (sa - (sb + sa) / 2.0)).abs() < 1e-12);
    // Batch order does not matter.
    let x = c.critic_batch_gap(&[a.clone(), b.clone()], &[b.clone()], &m, &p).unwrap();
    let y = c.critic_batch_gap(&[b.clone(), a.clone()], &[b.clone()], &m, &p).unwrap();
    assert!((x - y).abs() < 1e-12);
    assert!(c.critic_forward(&traj(&[0, 1]), &m, &p).is_err());
}

#[test]
fn constant_critic_has_zero_gap() {
    let (c, mut p, m) = toy();
    let shape = p.get("crt.head2.w").unwrap().shape().to_vec();
    p.set("crt.head2.w", Tensor::zeros(&shape));
    p.set("crt.head2.b", Tensor::scalar(0.7));
    let gap = c.critic_batch_gap(&[traj(&[0, 9, 18, 27])], &[traj(&[1, 2, 3, 4])], &m, &p).unwrap();
    assert_eq!(gap, 0.0);
}

#[test]
fn full_critic_gradient_check() {
    let (c, mut p, m) = toy();
    let mut rng = Rng::seed_from_u64(3);
    let names: Vec<String> = p.names().map(String::from).collect();
    for n in &names {
        if n.ends_with(".b") {
            let len = p.get(n).unwrap().len();
            p.set(n, Tensor::new(&[len], (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()));
        }
    }
    let coords = Tensor::matrix(8, 2, (0..16).map(|_| rng.gen_range(0.0..1.0)).collect());
    let loss = |p: &ModelParams, coords: &Tensor| -> f64 {
        let mut g = Graph::new();
        let cond = c.condition(&mut g, p, &m).unwrap();
        let x = g.input(coords.clone());
        let s = c.score(&mut g, p, x, 2, cond).unwrap();
        g.value(s).data()[0] - 2.0 * g.value(s).data()[1]
    };
    let mut g = Graph::new();
    let cond = c.condition(&mut g, &p, &m).unwrap();
    let x = g.input(coords.clone());
    let s = c.score(&mut g, &p, x, 2, cond).unwrap();
    g.backward_with(s, Some(vec![1.0, -2.0]));
    let grads = g.param_grads();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let rel = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na.max(nb) < 1e-10 {
            0.0
        } else {
            d / na.max(nb)
        }
    };
    for n in &names {
        let len = p.get(n).unwrap().len();
        let mut num = vec![0.0; len];
        for (i, slot) in num.iter_mut().enumerate() {
            let mut q = p.clone();
            q.get_mut(n).unwrap().data_mut()[i] += h;
            let up = loss(&q, &coords);
            q.get_mut(n).unwrap().data_mut()[i] -= 2.0 * h;
            *slot = (up - loss(&q, &coords)) / (2.0 * h);
        }
        let e = rel(&grads[n], &num);
        assert!(e < 1e-4, "{n}: {e}");
        worst = worst.max(e);
    }
    let mut num = vec![0.0; 16];
    for (i, slot) in num.iter_mut().enumerate() {
        let mut c2 = coords.clone();
        c2.data_mut()[i] += h;
        let up = loss(&p, &c2);
        c2.data_mut()[i] -= 2.0 * h;
        *slot = (up - loss(&p, &c2)) / (2.0 * h);
    }
    assert!(rel(g.grad(x).unwrap(), &num) < 1e-4);
}
