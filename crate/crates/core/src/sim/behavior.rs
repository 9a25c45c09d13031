use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::schema::QuestionSpec;

/// How a simulated user picks answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BehaviorType {
    /// Uniform over all options.
    Random,
    /// Option `((id - 1) mod option_count) + 1` on question `id`.
    Pattern,
    /// Always the true option.
    Accurate,
    /// Rounded normal around the truth, sd 0.5.
    NormalLow,
    /// Rounded normal around the truth, sd 1.5.
    NormalHigh,
}

impl BehaviorType {
    pub const ALL: [BehaviorType; 5] = [
        BehaviorType::Random,
        BehaviorType::Pattern,
        BehaviorType::Accurate,
        BehaviorType::NormalLow,
        BehaviorType::NormalHigh,
    ];

    pub fn std_dev(self) -> Option<f64> {
        match self {
            BehaviorType::NormalLow => Some(0.5),
            BehaviorType::NormalHigh => Some(1.5),
            _ => None,
        }
    }

    /// Ground-truth label used when scoring detection: Random, Pattern and
    /// NormalHigh count as malicious.
    pub fn expected_malicious(self) -> bool {
        matches!(
            self,
            BehaviorType::Random | BehaviorType::Pattern | BehaviorType::NormalHigh
        )
    }

    pub fn slug(self) -> &'static str {
        match self {
            BehaviorType::Random => "random",
            BehaviorType::Pattern => "pattern",
            BehaviorType::Accurate => "accurate",
            BehaviorType::NormalLow => "normal-low",
            BehaviorType::NormalHigh => "normal-high",
        }
    }

    /// Long description as printed in results tables.
    pub fn description(self) -> &'static str {
        match self {
            BehaviorType::Random => "Random",
            BehaviorType::Pattern => "Pattern",
            BehaviorType::Accurate => "Accurate",
            BehaviorType::NormalLow => "Normal distribution with low variance",
            BehaviorType::NormalHigh => "Normal distribution with high variance",
        }
    }
}

impl std::fmt::Display for BehaviorType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BehaviorType::Random => "Random",
            BehaviorType::Pattern => "Pattern",
            BehaviorType::Accurate => "Accurate",
            BehaviorType::NormalLow => "NormalLow",
            BehaviorType::NormalHigh => "NormalHigh",
        };
        f.write_str(s)
    }
}

/// Rounds half away from zero, then clamps into `1..=option_count`.
pub fn snap_to_option(sample: f64, option_count: u32) -> u32 {
    sample.round().clamp(1.0, f64::from(option_count)) as u32
}

/// Picks an option for a scored question.
pub fn answer<R: Rng + ?Sized>(
    behavior: BehaviorType,
    question: &QuestionSpec,
    truth: u32,
    rng: &mut R,
) -> u32 {
    let k = question.option_count;
    match behavior {
        BehaviorType::Random => rng.random_range(1..=k),
        BehaviorType::Pattern => (question.id - 1) % k + 1,
        BehaviorType::Accurate => truth,
        BehaviorType::NormalLow | BehaviorType::NormalHigh => {
            let sd = behavior.std_dev().expect("normal behaviour");
            let normal = Normal::new(f64::from(truth), sd).expect("positive sd");
            snap_to_option(normal.sample(rng), k)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Category, QuestionKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(id: u32, k: u32) -> QuestionSpec {
        QuestionSpec {
            id,
            category: Category::Victim,
            kind: QuestionKind::Scored,
            text: String::new(),
            option_count: k,
            option_labels: vec![String::new(); k as usize],
        }
    }

    #[test]
    fn pattern_rotates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(answer(BehaviorType::Pattern, &q(1, 2), 1, &mut rng), 1);
        assert_eq!(answer(BehaviorType::Pattern, &q(2, 2), 1, &mut rng), 2);
        assert_eq!(answer(BehaviorType::Pattern, &q(3, 3), 1, &mut rng), 3);
        assert_eq!(answer(BehaviorType::Pattern, &q(3, 2), 1, &mut rng), 1);
        assert_eq!(answer(BehaviorType::Pattern, &q(12, 10), 1, &mut rng), 2);
    }

    #[test]
    fn accurate_is_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(answer(BehaviorType::Accurate, &q(1, 10), 4, &mut rng), 4);
    }

    #[test]
    fn snapping() {
        assert_eq!(snap_to_option(4.2, 3), 3);
        assert_eq!(snap_to_option(2.4, 5), 2);
        assert_eq!(snap_to_option(2.5, 5), 3);
        assert_eq!(snap_to_option(-3.0, 5), 1);
        assert_eq!(snap_to_option(0.49, 5), 1);
    }

    #[test]
    fn answers_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for b in BehaviorType::ALL {
            for k in 2..=10 {
                for _ in 0..200 {
                    let a = answer(b, &q(5, k), k.div_ceil(2), &mut rng);
                    assert!((1..=k).contains(&a));
                }
            }
        }
    }

    #[test]
    fn sigma_values() {
        assert_eq!(BehaviorType::NormalLow.std_dev(), Some(0.5));
        assert_eq!(BehaviorType::NormalHigh.std_dev(), Some(1.5));
        assert_eq!(BehaviorType::Random.std_dev(), None);
    }
}
