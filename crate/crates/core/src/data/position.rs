/// Position bucket of token `token_idx` relative to an entity anchor.
///
/// The signed distance `token_idx - anchor` is clamped to `[-max_len, max_len]`
/// and shifted into `[0, 2 * max_len]`. A missing entity maps to the reserved
/// bucket `2 * max_len + 2`, so tables need `2 * max_len + 3` rows.
pub fn position_bucket(token_idx: usize, anchor: Option<usize>, max_len: usize) -> usize {
    match anchor {
        None => missing_bucket(max_len),
        Some(anchor) => {
            let l = max_len as i64;
            let dist = (token_idx as i64 - anchor as i64).clamp(-l, l);
            (dist + l) as usize
        }
    }
}

pub fn missing_bucket(max_len: usize) -> usize {
    2 * max_len + 2
}

/// Rows in each position-embedding table.
pub fn bucket_count(max_len: usize) -> usize {
    2 * max_len + 3
}
