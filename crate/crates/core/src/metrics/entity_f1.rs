use serde::{Deserialize, Serialize};

use crate::caption::EntitySet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set-overlap precision, recall and F1. Two empty sets agree perfectly; an
/// empty side against a non-empty one scores zero.
pub fn ea_f1(candidate: &EntitySet, reference: &EntitySet) -> EntityScores {
    match (candidate.is_empty(), reference.is_empty()) {
        (true, true) => return EntityScores { precision: 1.0, recall: 1.0, f1: 1.0 },
        (true, false) | (false, true) => return EntityScores { precision: 0.0, recall: 0.0, f1: 0.0 },
        _ => {}
    }
    let common = candidate.intersection_len(reference) as f64;
    let precision = common / candidate.len() as f64;
    let recall = common / reference.len() as f64;
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    EntityScores { precision, recall, f1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conventions_and_hand_values() {
        let a = EntitySet::new(["traffic light", "pedestrian"]);
        let b = EntitySet::new(["traffic light", "stop sign"]);
        assert_eq!(ea_f1(&a, &a), EntityScores { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(ea_f1(&a, &b), EntityScores { precision: 0.5, recall: 0.5, f1: 0.5 });
        let empty = EntitySet::default();
        assert_eq!(ea_f1(&empty, &empty).f1, 1.0);
        assert_eq!(ea_f1(&empty, &a).f1, 0.0);
        assert_eq!(ea_f1(&a, &empty).f1, 0.0);
    }

    #[test]
    fn swapping_operands_swaps_precision_and_recall() {
        let a = EntitySet::new(["car", "bus", "lane"]);
        let b = EntitySet::new(["car"]);
        assert_eq!(ea_f1(&a, &b).precision, ea_f1(&b, &a).recall);
        assert_eq!(ea_f1(&a, &b).recall, ea_f1(&b, &a).precision);
    }
}
