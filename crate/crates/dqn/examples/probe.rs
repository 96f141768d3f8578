// Scratch diagnostic; not part of the deliverable.
use dqn::nn::{init_params, qnet_backward, qnet_forward, QNetParams};
use dqn::optim::{rmsprop_step, RmsPropHyper, RmsPropState};
use dqn::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn state(ball: usize, paddle: usize) -> Vec<f32> {
    let mut img = vec![0.0f32; 24 * 24];
    img[22 * 24 + ball] = 1.0;
    for c in paddle - 1..=paddle + 1 { img[23 * 24 + c] = 1.0; }
    let mut stack = Vec::with_capacity(4 * 576);
    for _ in 0..4 { stack.extend_from_slice(&img); }
    stack
}

fn main() {
    let g = dqn::nn::Geometry {
        input_channels: 4, input_height: 24, input_width: 24,
        conv1: dqn::nn::ConvSpec { out_channels: 8, kernel: 3, stride: 1 },
        conv2: dqn::nn::ConvSpec { out_channels: 16, kernel: 3, stride: 2 },
        hidden: 64, num_actions: 3,
    };
    for (name, hyper, balanced) in [
        ("defaults, natural 12.5% positives", RmsPropHyper::default(), false),
        ("defaults, balanced 50%", RmsPropHyper::default(), true),
        ("lr 1e-3, natural", RmsPropHyper { learning_rate: 1e-3, ..Default::default() }, false),
    ] {
        let mut params: QNetParams<f32> = init_params(g, 7).unwrap();
        let mut rms = RmsPropState::new(&g, hyper).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for step in 0..10000 {
            let mut data = Vec::with_capacity(32 * 4 * 576);
            let mut ys = Vec::with_capacity(32);
            for _ in 0..32 {
                let (ball, paddle);
                if balanced && rng.gen::<bool>() {
                    paddle = rng.gen_range(1..23usize);
                    let lo = paddle.saturating_sub(1).max(0);
                    ball = (lo + rng.gen_range(0..3)).min(23);
                } else {
                    ball = rng.gen_range(0..24usize);
                    paddle = rng.gen_range(1..23usize);
                }
                data.extend_from_slice(&state(ball, paddle));
                ys.push(if ball.abs_diff(paddle) <= 1 { 1.0f32 } else { -1.0 });
            }
            let batch = Tensor::from_vec([32, 4, 24, 24], data).unwrap();
            let targets = Tensor::from_vec([32], ys).unwrap();
            let (loss, grads) = qnet_backward(&params, &batch, &vec![0usize; 32], &targets).unwrap();
            rmsprop_step(&mut params, &grads, &mut rms).unwrap();
            if step % 3333 == 3332 {
                // measure accuracy on the full grid + weight norms
                let mut correct = 0;
                let mut pos_hit = 0;
                let mut pos_n = 0;
                for ball in 0..24 {
                    for paddle in 1..23 {
                        let b = Tensor::from_vec([1, 4, 24, 24], state(ball, paddle)).unwrap();
                        let q = qnet_forward(&params, &b).unwrap().data()[0];
                        let label = ball.abs_diff(paddle) <= 1;
                        if (q > 0.0) == label { correct += 1; }
                        if label { pos_n += 1; if q > 0.0 { pos_hit += 1; } }
                    }
                }
                let norm = |t: &Tensor<f32>| (t.data().iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
                println!(
                    "  {name} step {}: loss {loss:.3} acc {correct}/528 pos {pos_hit}/{pos_n} | norms c1 {:.2} c2 {:.2} fc {:.2} out {:.2}",
                    step + 1,
                    norm(&params.tensors.conv1_w), norm(&params.tensors.conv2_w),
                    norm(&params.tensors.fc1_w), norm(&params.tensors.out_w)
                );
            }
        }
    }
}
