use super::{action_score, is_legal, LinkError, Tube};
use crate::proposals::VideoProposals;
use crate::scalar::Scalar;

/// Largest number of candidate tubes [`oracle_exhaustive`] will enumerate.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// Enumerates every tube of the clip and returns the one with the highest
/// action score (smallest id sequence on ties). With `legal_only`, illegal
/// tubes are skipped and `None` is returned when none is legal.
pub fn oracle_exhaustive<T: Scalar>(v: &VideoProposals<T>, tau: T, legal_only: bool) -> Result<Option<Tube<T>>, LinkError> {
    if let Some(frame) = v.frames().iter().position(Vec::is_empty) {
        return Err(LinkError::EmptyFrame { frame });
    }
    let combinations = v.frames().iter().map(|f| f.len() as u128).product::<u128>();
    if combinations > ORACLE_LIMIT {
        return Err(LinkError::TooLarge { combinations, limit: ORACLE_LIMIT });
    }

    let frames = v.frames();
    let mut choice = vec![0usize; frames.len()];
    let mut best: Option<(T, Vec<u64>, Vec<usize>)> = None;
    loop {
        let boxes: Vec<_> = choice.iter().enumerate().map(|(t, &i)| frames[t][i].bbox).collect();
        let objectness: Vec<_> = choice.iter().enumerate().map(|(t, &i)| frames[t][i].objectness).collect();
        if !legal_only || is_legal(&boxes, tau) {
            let score = action_score(&boxes, &objectness, tau)?;
            let ids: Vec<u64> = choice.iter().enumerate().map(|(t, &i)| frames[t][i].id).collect();
            let wins = match &best {
                None => true,
                Some((s, best_ids, _)) => score > *s || (score == *s && ids < *best_ids),
            };
            if wins {
                best = Some((score, ids, choice.clone()));
            }
        }
        // odometer increment, last frame fastest
        let mut t = frames.len();
        loop {
            if t == 0 {
                return best
                    .map(|(_, _, c)| {
                        let picked: Vec<_> = c.iter().enumerate().map(|(t, &i)| frames[t][i]).collect();
                        Tube::from_proposals(&picked, tau)
                    })
                    .transpose();
            }
            t -= 1;
            choice[t] += 1;
            if choice[t] < frames[t].len() {
                break;
            }
            choice[t] = 0;
        }
    }
}
