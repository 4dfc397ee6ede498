//! String tokenization and similarity kernels.
//!
//! Everything here is a pure function over Unicode scalar values. Lengths and
//! edit positions are counted in code points, not bytes, and case folding is
//! the plain `to_lowercase` mapping. Ratios are scaled to `[0, 1]` so that all
//! downstream features share one range.

use std::collections::BTreeSet;

/// Deduplicated lowercase tokens of a title.
///
/// Backed by a sorted set so joins and diffs are deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSet(BTreeSet<String>);

impl TokenSet {
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    fn intersection<'a>(&'a self, other: &'a TokenSet) -> Vec<&'a str> {
        self.0
            .intersection(&other.0)
            .map(String::as_str)
            .collect()
    }

    fn difference<'a>(&'a self, other: &'a TokenSet) -> Vec<&'a str> {
        self.0.difference(&other.0).map(String::as_str).collect()
    }
}

impl FromIterator<String> for TokenSet {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        TokenSet(iter.into_iter().collect())
    }
}

/// Maximal digit runs found in a string, leading zeros preserved.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NumberSet(BTreeSet<String>);

impl NumberSet {
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<String> for NumberSet {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        NumberSet(iter.into_iter().collect())
    }
}

/// Minimum number of single-character insertions, deletions, and
/// substitutions transforming `a` into `b`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance_chars(&a, &b, 1)
}

/// Edit distance where substitutions cost 2 and insertions/deletions cost 1.
///
/// This is the kernel behind [`ratio`]: with substitution cost 2 the distance
/// never exceeds `len(a) + len(b)`, so the normalized similarity stays in
/// `[0, 1]`.
pub fn edit_distance_sub2(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance_chars(&a, &b, 2)
}

/// Two-row dynamic program shared by both edit distances.
fn edit_distance_chars(a: &[char], b: &[char], sub_cost: usize) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + if ca == cb { 0 } else { sub_cost };
            let del = prev[j + 1] + 1;
            let ins = curr[j] + 1;
            curr[j + 1] = sub.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Normalized similarity `(len(a) + len(b) - edit_distance_sub2(a, b)) / (len(a) + len(b))`.
///
/// Defined as 1.0 when both strings are empty.
pub fn ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    ratio_chars(&a, &b)
}

fn ratio_chars(a: &[char], b: &[char]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let dist = edit_distance_chars(a, b, 2);
    (total - dist) as f64 / total as f64
}

/// Best [`ratio`] of the shorter string against every contiguous window of
/// the longer string with the same length.
///
/// Returns 1.0 whenever the shorter string occurs as a substring of the
/// longer one. The window scan is quadratic in the shorter length, which is
/// fine at product-title scale.
pub fn partial_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        // The empty string is a substring of everything.
        return 1.0;
    }
    let w = short.len();
    let mut best = 0.0f64;
    for start in 0..=(long.len() - w) {
        let score = ratio_chars(short, &long[start..start + w]);
        if score > best {
            best = score;
        }
    }
    best
}

/// Order-insensitive fuzzy similarity built from token intersections and
/// remainders.
///
/// Both inputs are tokenized; with `I` the sorted intersection joined by
/// spaces, `X` = `I` plus the sorted tokens only in `a`, and `Y` = `I` plus
/// the sorted tokens only in `b`, the result is
/// `max(ratio(I, X), ratio(I, Y), ratio(X, Y))`. Invariant under token
/// reordering and duplication.
pub fn token_set_ratio(a: &str, b: &str) -> f64 {
    let ta = tokenize(a);
    let tb = tokenize(b);
    let inter = ta.intersection(&tb).join(" ");
    let only_a = ta.difference(&tb).join(" ");
    let only_b = tb.difference(&ta).join(" ");
    let combined_a = join_nonempty(&inter, &only_a);
    let combined_b = join_nonempty(&inter, &only_b);
    ratio(&inter, &combined_a)
        .max(ratio(&inter, &combined_b))
        .max(ratio(&combined_a, &combined_b))
}

fn join_nonempty(left: &str, right: &str) -> String {
    match (left.is_empty(), right.is_empty()) {
        (true, _) => right.to_string(),
        (_, true) => left.to_string(),
        _ => format!("{left} {right}"),
    }
}

/// Lowercases the input, splits on every maximal run of non-alphanumeric
/// characters, and deduplicates the fragments.
pub fn tokenize(s: &str) -> TokenSet {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// `|P1 ∩ P2| / |P1 ∪ P2|`, defined as 1.0 when both sets are empty.
pub fn jaccard_sim(p1: &TokenSet, p2: &TokenSet) -> f64 {
    jaccard_of_sets(&p1.0, &p2.0)
}

fn jaccard_of_sets(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    inter as f64 / union as f64
}

/// Collects every maximal run of decimal digits, including runs embedded in
/// alphanumeric tokens ("sx730" yields "730").
pub fn extract_numbers(s: &str) -> NumberSet {
    let mut numbers = BTreeSet::new();
    let mut run = String::new();
    for c in s.chars() {
        if c.is_ascii_digit() {
            run.push(c);
        } else if !run.is_empty() {
            numbers.insert(std::mem::take(&mut run));
        }
    }
    if !run.is_empty() {
        numbers.insert(run);
    }
    NumberSet(numbers)
}

/// Jaccard similarity of the digit runs of the two strings, with the same
/// both-empty convention as [`jaccard_sim`].
pub fn numeric_jaccard(a: &str, b: &str) -> f64 {
    jaccard_of_sets(&extract_numbers(a).0, &extract_numbers(b).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Recursive-definition oracle for the edit distances. Memoized so that
    /// exhaustive small-alphabet sweeps stay fast, but the recurrence is the
    /// textbook one, independent of the two-row DP above.
    pub(crate) fn recursive_edit_distance(a: &[char], b: &[char], sub_cost: usize) -> usize {
        use std::collections::HashMap;
        fn go(
            a: &[char],
            b: &[char],
            i: usize,
            j: usize,
            sub_cost: usize,
            memo: &mut HashMap<(usize, usize), usize>,
        ) -> usize {
            if i == a.len() {
                return b.len() - j;
            }
            if j == b.len() {
                return a.len() - i;
            }
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let sub = go(a, b, i + 1, j + 1, sub_cost, memo)
                + if a[i] == b[j] { 0 } else { sub_cost };
            let del = go(a, b, i + 1, j, sub_cost, memo) + 1;
            let ins = go(a, b, i, j + 1, sub_cost, memo) + 1;
            let best = sub.min(del).min(ins);
            memo.insert((i, j), best);
            best
        }
        go(a, b, 0, 0, sub_cost, &mut HashMap::new())
    }

    fn oracle_lev(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        recursive_edit_distance(&a, &b, 1)
    }

    fn oracle_sub2(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        recursive_edit_distance(&a, &b, 2)
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), oracle_lev("kitten", "sitting"));
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn edit_distance_sub2_examples() {
        assert_eq!(edit_distance_sub2("ab", "ab"), 0);
        assert_eq!(edit_distance_sub2("ab", "cd"), oracle_sub2("ab", "cd"));
        assert_eq!(edit_distance_sub2("ab", "cd"), 4);
        assert_eq!(edit_distance_sub2("abcd", "abce"), oracle_sub2("abcd", "abce"));
        assert_eq!(edit_distance_sub2("abcd", "abce"), 2);
    }

    #[test]
    fn sub2_parity_matches_length_difference() {
        let cases = [("abc", "xy"), ("", "abcd"), ("hello", "world"), ("a", "ab")];
        for (a, b) in cases {
            let d = edit_distance_sub2(a, b);
            let len_diff = a.chars().count().abs_diff(b.chars().count());
            assert_eq!(d % 2, len_diff % 2, "parity for {a:?} vs {b:?}");
            assert!(d <= a.chars().count() + b.chars().count());
        }
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(ratio("abcd", "abcd"), 1.0);
        assert_eq!(ratio("ab", "cd"), 0.0);
        assert_eq!(ratio("abcd", "abce"), 0.75);
        assert_eq!(ratio("", ""), 1.0);
    }

    #[test]
    fn partial_ratio_examples() {
        assert_eq!(partial_ratio("ab", "ab"), 1.0);
        assert_eq!(partial_ratio("ab", "xxabyy"), 1.0);
        // Exhaustive window check: windows of "xbcdx" with length 3 are
        // xbc, bcd, cdx; the best ratio against "abc" is 2/3.
        let expect = ["xbc", "bcd", "cdx"]
            .iter()
            .map(|w| ratio("abc", w))
            .fold(0.0f64, f64::max);
        assert_eq!(partial_ratio("abc", "xbcdx"), expect);
        assert!((partial_ratio("abc", "xbcdx") - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn partial_ratio_empty_shorter_side() {
        assert_eq!(partial_ratio("", ""), 1.0);
        assert_eq!(partial_ratio("", "abc"), 1.0);
    }

    /// Straight-line reimplementation of the token-set construction, used to
    /// cross-check the intersection/remainder assembly.
    fn token_set_ratio_oracle(a: &str, b: &str) -> f64 {
        let ta: Vec<String> = tokenize(a).iter().map(str::to_string).collect();
        let tb: Vec<String> = tokenize(b).iter().map(str::to_string).collect();
        let mut inter: Vec<&String> = ta.iter().filter(|t| tb.contains(t)).collect();
        let mut only_a: Vec<&String> = ta.iter().filter(|t| !tb.contains(t)).collect();
        let mut only_b: Vec<&String> = tb.iter().filter(|t| !ta.contains(t)).collect();
        inter.sort();
        only_a.sort();
        only_b.sort();
        let i = inter.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
        let oa = only_a.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
        let ob = only_b.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
        let x = join_nonempty(&i, &oa);
        let y = join_nonempty(&i, &ob);
        ratio(&i, &x).max(ratio(&i, &y)).max(ratio(&x, &y))
    }

    #[test]
    fn token_set_ratio_examples() {
        assert_eq!(token_set_ratio("sony dsc hx60", "hx60 sony dsc"), 1.0);
        assert_eq!(token_set_ratio("a b", "a b"), 1.0);
        let got = token_set_ratio("new york mets", "new york yankees");
        let want = token_set_ratio_oracle("new york mets", "new york yankees");
        assert!((got - want).abs() < 1e-12, "got {got}, oracle {want}");
        assert!(got > 0.0 && got < 1.0);
    }

    #[test]
    fn token_set_ratio_matches_oracle_on_mixed_cases() {
        let cases = [
            ("fuji instax mini 9", "instax mini 9 fuji blue"),
            ("canon eos m50", "nikon z50"),
            ("one two three", "three two one one"),
            ("", "anything here"),
            ("", ""),
        ];
        for (a, b) in cases {
            assert!(
                (token_set_ratio(a, b) - token_set_ratio_oracle(a, b)).abs() < 1e-12,
                "mismatch for {a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn tokenize_examples() {
        let t = tokenize("Sony DSC-HX60");
        let tokens: Vec<&str> = t.iter().collect();
        assert_eq!(tokens, vec!["dsc", "hx60", "sony"]);
        assert!(tokenize("").is_empty());
        let t = tokenize("a  a,a");
        assert_eq!(t.iter().collect::<Vec<_>>(), vec!["a"]);
    }

    #[test]
    fn jaccard_examples() {
        let ab: TokenSet = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let bc: TokenSet = ["b", "c"].iter().map(|s| s.to_string()).collect();
        let empty = TokenSet::default();
        assert_eq!(jaccard_sim(&ab, &ab), 1.0);
        assert!((jaccard_sim(&ab, &bc) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard_sim(&empty, &empty), 1.0);
        assert_eq!(jaccard_sim(&ab, &empty), 0.0);
    }

    #[test]
    fn extract_numbers_examples() {
        let n = extract_numbers("panasonic lumix fz82 black 24");
        assert_eq!(n.iter().collect::<Vec<_>>(), vec!["24", "82"]);
        assert!(extract_numbers("red camera").is_empty());
        assert_eq!(extract_numbers("sx730 hs").iter().collect::<Vec<_>>(), vec!["730"]);
        // Leading zeros preserved, runs split by non-digits.
        assert_eq!(extract_numbers("a007b07").iter().collect::<Vec<_>>(), vec!["007", "07"]);
    }

    #[test]
    fn numeric_jaccard_examples() {
        assert_eq!(numeric_jaccard("tg 5 red", "tg 5 black"), 1.0);
        assert_eq!(numeric_jaccard("sx730 hs", "sx620 hs"), 0.0);
        assert_eq!(numeric_jaccard("red", "blue"), 1.0);
    }

    #[test]
    fn dp_matches_recursive_oracle_small_alphabet() {
        // Smaller sweep than the acceptance suite (lengths <= 3); the full
        // <=5 enumeration lives there.
        let alphabet = ['a', 'b', 'c'];
        let mut strings = vec![String::new()];
        for len in 1..=3 {
            let mut next = Vec::new();
            for s in strings.iter().filter(|s| s.len() == len - 1) {
                for c in alphabet {
                    let mut t = s.clone();
                    t.push(c);
                    next.push(t);
                }
            }
            strings.extend(next);
        }
        for a in &strings {
            for b in &strings {
                assert_eq!(levenshtein(a, b), oracle_lev(a, b), "lev {a:?} {b:?}");
                assert_eq!(edit_distance_sub2(a, b), oracle_sub2(a, b), "sub2 {a:?} {b:?}");
            }
        }
    }
}
