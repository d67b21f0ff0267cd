//! Twenty hand-computed implicit-reward margin fixtures.
//!
//! Each case fixes a four-response prompt (reference logits, policy logits,
//! lengths, observed ranking) together with margins worked out directly from
//! the defining formulas: the top-two log-ratio difference, and the same
//! less 0.01 times the top-two length difference. The policy temperature
//! `beta` scales rewards, not log-probabilities, so it must not move either
//! metric; the expected values were computed without it.

use preflab_core::metrics::{rm_dpo, rm_rdpo};
use preflab_core::RewardModel;

pub struct Fixture {
    pub ref_logits: [f64; 4],
    pub pol_logits: [f64; 4],
    pub beta: f64,
    pub lengths: [u32; 4],
    pub ranking: [u32; 4],
    pub rm_dpo: f64,
    pub rm_rdpo: f64,
}

pub const FIXTURES: [Fixture; 20] = [
    Fixture {
        ref_logits: [0.926325, 1.0921, 0.091307, -1.864451],
        pol_logits: [1.37102, 1.196644, 0.56408, -1.765133],
        beta: 1.0,
        lengths: [28, 45, 34, 8],
        ranking: [2, 1, 3, 0],
        rm_dpo: 0.36822900000000014,
        rm_rdpo: 0.47822900000000013,
    },
    Fixture {
        ref_logits: [1.978306, -1.198007, 0.726241, -1.936203],
        pol_logits: [-1.297569, 0.769454, 1.952983, -1.139445],
        beta: 0.5,
        lengths: [39, 33, 40, 4],
        ranking: [3, 0, 1, 2],
        rm_dpo: 4.0726329999999997,
        rm_rdpo: 4.4226329999999994,
    },
    Fixture {
        ref_logits: [-1.726327, -0.280707, 1.461943, -0.50229],
        pol_logits: [-1.815943, -1.542871, 1.464135, -1.583017],
        beta: 0.05,
        lengths: [26, 59, 29, 21],
        ranking: [0, 3, 1, 2],
        rm_dpo: 0.99111100000000008,
        rm_rdpo: 0.94111100000000003,
    },
    Fixture {
        ref_logits: [-1.943307, 0.37215, 0.441755, -1.109889],
        pol_logits: [-1.689365, 1.427826, 1.520263, 0.770714],
        beta: 0.05,
        lengths: [54, 26, 59, 30],
        ranking: [0, 1, 2, 3],
        rm_dpo: -0.80173400000000061,
        rm_rdpo: -1.0817340000000006,
    },
    Fixture {
        ref_logits: [-1.633851, 1.497724, -1.283534, -0.74431],
        pol_logits: [-1.913837, 1.550047, 1.445614, 1.759325],
        beta: 0.25,
        lengths: [39, 44, 24, 59],
        ranking: [1, 0, 2, 3],
        rm_dpo: 0.33230900000000019,
        rm_rdpo: 0.2823090000000002,
    },
    Fixture {
        ref_logits: [0.846357, -1.100018, -1.700863, -0.174228],
        pol_logits: [-0.590037, 1.186884, -1.820623, 0.354567],
        beta: 0.25,
        lengths: [14, 27, 59, 13],
        ranking: [2, 3, 1, 0],
        rm_dpo: -0.64855499999999999,
        rm_rdpo: -1.108555,
    },
    Fixture {
        ref_logits: [0.956394, 1.384979, -0.915031, 0.539381],
        pol_logits: [0.512031, -0.173469, 1.990941, -1.52494],
        beta: 0.1,
        lengths: [2, 17, 7, 18],
        ranking: [0, 2, 1, 3],
        rm_dpo: -3.3503350000000003,
        rm_rdpo: -3.3003350000000005,
    },
    Fixture {
        ref_logits: [-1.240395, -1.811889, -0.088969, -0.362905],
        pol_logits: [1.66825, -1.566628, 0.373323, 1.175379],
        beta: 1.0,
        lengths: [10, 9, 2, 41],
        ranking: [0, 2, 3, 1],
        rm_dpo: 2.4463530000000002,
        rm_rdpo: 2.3663530000000002,
    },
    Fixture {
        ref_logits: [-1.473373, -1.222525, 0.07483, -1.939606],
        pol_logits: [1.080129, -1.287282, 1.867146, 0.8404],
        beta: 0.5,
        lengths: [52, 17, 17, 35],
        ranking: [3, 2, 0, 1],
        rm_dpo: 0.98768999999999996,
        rm_rdpo: 0.80769000000000002,
    },
    Fixture {
        ref_logits: [-0.608195, -1.077464, 0.022219, 1.686299],
        pol_logits: [0.084961, -1.119173, 1.641241, -0.74816],
        beta: 1.0,
        lengths: [50, 49, 51, 56],
        ranking: [1, 3, 2, 0],
        rm_dpo: 2.3927499999999999,
        rm_rdpo: 2.4627499999999998,
    },
    Fixture {
        ref_logits: [-0.913176, -1.431907, 0.905105, -0.928375],
        pol_logits: [0.245474, 1.180215, -1.425908, 0.235811],
        beta: 0.05,
        lengths: [12, 40, 11, 13],
        ranking: [0, 2, 1, 3],
        rm_dpo: 3.4896629999999993,
        rm_rdpo: 3.4796629999999995,
    },
    Fixture {
        ref_logits: [-1.56185, -1.690053, -1.400834, 0.573488],
        pol_logits: [0.832548, 1.98239, -0.60558, -1.701845],
        beta: 0.25,
        lengths: [46, 60, 44, 23],
        ranking: [3, 1, 0, 2],
        rm_dpo: -5.9477759999999993,
        rm_rdpo: -5.5777759999999992,
    },
    Fixture {
        ref_logits: [0.782917, -0.014662, 0.746954, 1.642317],
        pol_logits: [1.543883, -0.08722, -1.71047, 0.378932],
        beta: 1.0,
        lengths: [9, 42, 23, 57],
        ranking: [2, 3, 0, 1],
        rm_dpo: -1.1940389999999999,
        rm_rdpo: -0.85403899999999977,
    },
    Fixture {
        ref_logits: [0.961987, -0.970065, 1.525676, 0.705091],
        pol_logits: [-1.679595, 0.859969, 0.884593, 1.874523],
        beta: 0.1,
        lengths: [9, 36, 13, 49],
        ranking: [3, 2, 0, 1],
        rm_dpo: 1.8105150000000001,
        rm_rdpo: 1.4505150000000002,
    },
    Fixture {
        ref_logits: [-1.306277, 1.546007, -0.175199, 0.07874],
        pol_logits: [0.904989, 0.492477, 0.210137, -1.588126],
        beta: 0.25,
        lengths: [20, 58, 9, 11],
        ranking: [0, 1, 3, 2],
        rm_dpo: 3.2647959999999996,
        rm_rdpo: 3.6447959999999995,
    },
    Fixture {
        ref_logits: [1.3387, 0.262197, -0.231584, 1.152928],
        pol_logits: [-1.857275, 1.330659, 0.787698, -1.249453],
        beta: 0.25,
        lengths: [2, 17, 10, 56],
        ranking: [1, 3, 0, 2],
        rm_dpo: 3.4708429999999995,
        rm_rdpo: 3.8608429999999996,
    },
    Fixture {
        ref_logits: [-0.318035, 1.789353, -1.421847, 1.81797],
        pol_logits: [-0.363546, -0.662635, -0.547524, 1.905675],
        beta: 1.0,
        lengths: [1, 31, 58, 32],
        ranking: [2, 1, 3, 0],
        rm_dpo: 3.3263109999999996,
        rm_rdpo: 3.0563109999999996,
    },
    Fixture {
        ref_logits: [-1.575406, -1.407875, 1.230957, -0.45727],
        pol_logits: [-0.06925, -1.099021, 0.988157, 0.150563],
        beta: 1.0,
        lengths: [18, 50, 44, 33],
        ranking: [1, 0, 2, 3],
        rm_dpo: -1.1973020000000001,
        rm_rdpo: -1.5173020000000002,
    },
    Fixture {
        ref_logits: [-0.55907, -0.728901, -0.634511, 1.695284],
        pol_logits: [-0.586351, 0.509131, -0.84871, -0.055569],
        beta: 0.5,
        lengths: [45, 8, 26, 51],
        ranking: [2, 0, 3, 1],
        rm_dpo: -0.18691799999999992,
        rm_rdpo: 0.0030820000000000847,
    },
    Fixture {
        ref_logits: [1.025486, 0.931822, 1.041702, 0.52854],
        pol_logits: [-1.927387, -0.317382, 0.048473, 1.739129],
        beta: 1.0,
        lengths: [33, 46, 8, 26],
        ranking: [3, 1, 2, 0],
        rm_dpo: 2.4597929999999995,
        rm_rdpo: 2.6597929999999996,
    },
];

impl Fixture {
    pub fn world(&self) -> preflab_core::World {
        super::world_with(self.ref_logits.to_vec(), self.lengths.to_vec())
    }

    pub fn model(&self) -> RewardModel {
        RewardModel::DpoImplicit {
            logits: self.pol_logits.to_vec(),
            beta: self.beta,
        }
    }

    pub fn sample(&self) -> preflab_core::PreferenceSample {
        let rank_lengths: Vec<u32> = self.ranking.iter().map(|&y| self.lengths[y as usize]).collect();
        super::ranked_sample(self.ranking.to_vec(), vec![0.0; 4], rank_lengths)
    }

    /// (|rm_dpo error|, |rm_rdpo error|) of the implementation on this case.
    pub fn errors(&self) -> (f64, f64) {
        let (world, model, sample) = (self.world(), self.model(), self.sample());
        let dpo = rm_dpo(&model, &world, &sample).unwrap();
        let rdpo = rm_rdpo(&model, &world, &sample).unwrap();
        ((dpo - self.rm_dpo).abs(), (rdpo - self.rm_rdpo).abs())
    }
}

/// Worst-case (rm_dpo, rm_rdpo) absolute errors across all fixtures.
pub fn worst_errors() -> (f64, f64) {
    FIXTURES.iter().fold((0.0f64, 0.0f64), |(a, b), f| {
        let (da, db) = f.errors();
        (a.max(da), b.max(db))
    })
}
