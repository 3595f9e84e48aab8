//! Built-in model documents. Weights are seeded Gaussians scaled by
//! `sqrt(1 / fan_in)` so activations stay O(1).

use super::model::{ModelDoc, NodeDoc, OpSpec, Weights, MODEL_VERSION};

struct Builder {
    nodes: Vec<NodeDoc>,
    seed: u64,
}

impl Builder {
    fn new() -> Self {
        Builder { nodes: Vec::new(), seed: 1 }
    }

    fn push(&mut self, name: String, inputs: &[&str], op: OpSpec) -> String {
        self.nodes.push(NodeDoc { name: name.clone(), inputs: inputs.iter().map(|s| s.to_string()).collect(), op });
        name
    }

    fn random(&mut self, fan_in: usize, gain: f64) -> Weights {
        self.seed += 1;
        Weights::Random { seed: self.seed, std: gain / (fan_in as f64).sqrt() }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: &str, input: &str, in_c: usize, out_c: usize, k: usize, stride: usize, groups: usize) -> String {
        let fan_in = in_c / groups * k * k;
        let weights = self.random(fan_in, 1.0);
        let bias = Some(self.random(1, 0.05));
        self.push(
            name.to_string(),
            &[input],
            OpSpec::Convolution {
                out_channels: out_c,
                kernel: [k, k],
                stride: [stride, stride],
                padding: [k / 2, k / 2],
                groups,
                weights,
                bias,
            },
        )
    }

    fn relu(&mut self, name: &str, input: &str, bound: Option<f64>) -> String {
        self.push(name.to_string(), &[input], OpSpec::BoundedRelu { bound })
    }

    fn finish(mut self, name: &str, input_shape: [usize; 3], last: &str) -> ModelDoc {
        self.push("output".into(), &[last], OpSpec::Result);
        ModelDoc { version: MODEL_VERSION, name: name.to_string(), input_shape, nodes: self.nodes }
    }
}

/// 1x8x8 input, two 3x3 convolutions with BoundedRelu, global average pool
/// and a 10-way dense layer (a 1x1 convolution).
pub fn toy_cnn() -> ModelDoc {
    let mut b = Builder::new();
    b.seed = 100;
    let c1 = b.conv("conv1", "input", 1, 4, 3, 1, 1);
    let r1 = b.relu("relu1", &c1, Some(6.0));
    let c2 = b.conv("conv2", &r1, 4, 8, 3, 2, 1);
    let r2 = b.relu("relu2", &c2, Some(6.0));
    let p = b.push("pool".into(), &[&r2], OpSpec::AvgPool { kernel: None, stride: None });
    let fc = b.conv("dense", &p, 8, 10, 1, 1, 1);
    b.finish("toy-cnn", [1, 8, 8], &fc)
}

/// Channel rounding used by MobileNetV2.
pub fn make_divisible(v: f64, divisor: usize) -> usize {
    let d = divisor as f64;
    let mut out = ((v + d / 2.0) / d).floor() * d;
    out = out.max(d);
    if out < 0.9 * v {
        out += d;
    }
    out as usize
}

fn inverted_residual(b: &mut Builder, tag: &str, input: &str, in_c: usize, out_c: usize, stride: usize, t: usize) -> String {
    let hidden = in_c * t;
    let mut x = input.to_string();
    if t != 1 {
        let e = b.conv(&format!("{tag}_expand"), &x, in_c, hidden, 1, 1, 1);
        x = b.relu(&format!("{tag}_expand_relu"), &e, Some(6.0));
    }
    let dw = b.conv(&format!("{tag}_dw"), &x, hidden, hidden, 3, stride, hidden);
    let dr = b.relu(&format!("{tag}_dw_relu"), &dw, Some(6.0));
    let pr = b.conv(&format!("{tag}_project"), &dr, hidden, out_c, 1, 1, 1);
    if stride == 1 && in_c == out_c {
        b.push(format!("{tag}_add"), &[&pr, input], OpSpec::Add)
    } else {
        pr
    }
}

/// MobileNetV2 with width multiplier `alpha` on `res x res` RGB input.
pub fn mobilenet_v2(alpha: f64, res: usize, classes: usize) -> ModelDoc {
    const SETTINGS: [(usize, usize, usize, usize); 7] =
        [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2), (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)];
    let mut b = Builder::new();
    let mut c = make_divisible(32.0 * alpha, 8);
    let stem = b.conv("stem", "input", 3, c, 3, 2, 1);
    let mut x = b.relu("stem_relu", &stem, Some(6.0));
    for (bi, &(t, ch, n, s)) in SETTINGS.iter().enumerate() {
        let out_c = make_divisible(ch as f64 * alpha, 8);
        for i in 0..n {
            let stride = if i == 0 { s } else { 1 };
            x = inverted_residual(&mut b, &format!("block{}_{}", bi + 1, i + 1), &x, c, out_c, stride, t);
            c = out_c;
        }
    }
    let last = if alpha > 1.0 { make_divisible(1280.0 * alpha, 8) } else { 1280 };
    let head = b.conv("head", &x, c, last, 1, 1, 1);
    let hr = b.relu("head_relu", &head, Some(6.0));
    let pool = b.push("pool".into(), &[&hr], OpSpec::AvgPool { kernel: None, stride: None });
    let fc = b.conv("logits", &pool, last, classes, 1, 1, 1);
    b.finish(&format!("mobilenet_v2_{alpha}_{res}"), [3, res, res], &fc)
}

/// ResNet-50 (stride on the 3x3 convolution of each bottleneck), ReLU
/// after the residual add.
pub fn resnet50(res: usize, classes: usize) -> ModelDoc {
    let mut b = Builder::new();
    let stem = b.conv("stem", "input", 3, 64, 7, 2, 1);
    let sr = b.relu("stem_relu", &stem, None);
    let mut x = b.push("stem_pool".into(), &[&sr], OpSpec::MaxPool { kernel: [3, 3], stride: Some([2, 2]), padding: [1, 1] });
    let mut c = 64;
    for (si, &(width, blocks, stride)) in [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)].iter().enumerate() {
        for bi in 0..blocks {
            let tag = format!("stage{}_{}", si + 2, bi + 1);
            let s = if bi == 0 { stride } else { 1 };
            let out = width * 4;
            let a = b.conv(&format!("{tag}_a"), &x, c, width, 1, 1, 1);
            let ar = b.relu(&format!("{tag}_a_relu"), &a, None);
            let m = b.conv(&format!("{tag}_b"), &ar, width, width, 3, s, 1);
            let mr = b.relu(&format!("{tag}_b_relu"), &m, None);
            let e = b.conv(&format!("{tag}_c"), &mr, width, out, 1, 1, 1);
            let short = if bi == 0 { b.conv(&format!("{tag}_proj"), &x, c, out, 1, s, 1) } else { x.clone() };
            let sum = b.push(format!("{tag}_add"), &[&e, &short], OpSpec::Add);
            x = b.relu(&format!("{tag}_relu"), &sum, None);
            c = out;
        }
    }
    let pool = b.push("pool".into(), &[&x], OpSpec::AvgPool { kernel: None, stride: None });
    let fc = b.conv("fc", &pool, c, classes, 1, 1, 1);
    b.finish(&format!("resnet50_{res}"), [3, res, res], &fc)
}

/// A desk-sized MobileNetV2-like network: input scaling, a stem, three
/// inverted-residual blocks and a classifier, on 3x16x16 input.
pub fn scaled_mobilenet() -> ModelDoc {
    let mut b = Builder::new();
    b.seed = 500;
    let scale = b.push("scale".into(), &["input"], OpSpec::Multiply { weights: Some(Weights::Values(vec![0.9, 1.1, 1.0])) });
    let stem = b.conv("stem", &scale, 3, 8, 3, 2, 1);
    let mut x = b.relu("stem_relu", &stem, Some(6.0));
    x = inverted_residual(&mut b, "block1", &x, 8, 8, 1, 3);
    x = inverted_residual(&mut b, "block2", &x, 8, 8, 1, 3);
    x = inverted_residual(&mut b, "block3", &x, 8, 16, 2, 3);
    let head = b.conv("head", &x, 16, 32, 1, 1, 1);
    let hr = b.relu("head_relu", &head, Some(6.0));
    let pool = b.push("pool".into(), &[&hr], OpSpec::AvgPool { kernel: None, stride: None });
    let fc = b.conv("logits", &pool, 32, 10, 1, 1, 1);
    b.finish("scaled-mobilenet", [3, 16, 16], &fc)
}

pub const FIXTURE_NAMES: [&str; 5] = ["toy-cnn", "scaled-mobilenet", "mobilenet-v2-0.35-96", "mobilenet-v2-1.0-224", "resnet50"];

pub fn by_name(name: &str) -> Option<ModelDoc> {
    Some(match name {
        "toy-cnn" => toy_cnn(),
        "scaled-mobilenet" => scaled_mobilenet(),
        "mobilenet-v2-0.35-96" => mobilenet_v2(0.35, 96, 1001),
        "mobilenet-v2-1.0-224" => mobilenet_v2(1.0, 224, 1001),
        "resnet50" => resnet50(224, 1000),
        _ => return None,
    })
}
