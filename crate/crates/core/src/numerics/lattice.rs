//! Linear-chain lattice math in log space: partition function, marginals and
//! max-product decoding over a constrained tag set.

/// Which tags may start a sequence, follow each other, and end a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConstraints {
    pub num_tags: usize,
    /// Row-major `[prev][next]`.
    pub allowed: Vec<bool>,
    pub start: Vec<bool>,
    pub end: Vec<bool>,
}

impl ChainConstraints {
    pub fn unconstrained(num_tags: usize) -> Self {
        Self {
            num_tags,
            allowed: vec![true; num_tags * num_tags],
            start: vec![true; num_tags],
            end: vec![true; num_tags],
        }
    }

    pub fn is_allowed(&self, prev: usize, next: usize) -> bool {
        self.allowed[prev * self.num_tags + next]
    }

    /// True when the whole path respects start, transition and end constraints.
    pub fn path_is_valid(&self, path: &[usize]) -> bool {
        match (path.first(), path.last()) {
            (Some(&first), Some(&last)) => {
                self.start[first]
                    && self.end[last]
                    && path.windows(2).all(|w| self.is_allowed(w[0], w[1]))
            }
            _ => false,
        }
    }
}

/// Scores of a linear chain: emissions `[len][tags]`, transitions `[tags][tags]`,
/// start and end vectors. Forbidden entries are treated as `-inf`.
pub struct ChainScores<'a> {
    pub emissions: &'a [f64],
    pub len: usize,
    pub transitions: &'a [f64],
    pub start: &'a [f64],
    pub end: &'a [f64],
    pub constraints: &'a ChainConstraints,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl ChainScores<'_> {
    fn t(&self) -> usize {
        self.constraints.num_tags
    }

    fn emit(&self, pos: usize, tag: usize) -> f64 {
        self.emissions[pos * self.t() + tag]
    }

    fn trans(&self, prev: usize, next: usize) -> f64 {
        if self.constraints.is_allowed(prev, next) {
            self.transitions[prev * self.t() + next]
        } else {
            f64::NEG_INFINITY
        }
    }

    fn start_score(&self, tag: usize) -> f64 {
        if self.constraints.start[tag] {
            self.start[tag]
        } else {
            f64::NEG_INFINITY
        }
    }

    fn end_score(&self, tag: usize) -> f64 {
        if self.constraints.end[tag] {
            self.end[tag]
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Total score of a tag path; `-inf` if the path is forbidden.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        let mut score = self.start_score(path[0]) + self.emit(0, path[0]);
        for (j, w) in path.windows(2).enumerate() {
            score += self.trans(w[0], w[1]) + self.emit(j + 1, w[1]);
        }
        score + self.end_score(path[path.len() - 1])
    }

    fn forward(&self) -> Vec<f64> {
        let t = self.t();
        let mut alpha = vec![f64::NEG_INFINITY; self.len * t];
        for tag in 0..t {
            alpha[tag] = self.start_score(tag) + self.emit(0, tag);
        }
        for j in 1..self.len {
            for next in 0..t {
                let prev_row = &alpha[(j - 1) * t..j * t];
                let lse = log_sum_exp((0..t).map(|prev| prev_row[prev] + self.trans(prev, next)));
                alpha[j * t + next] = lse + self.emit(j, next);
            }
        }
        alpha
    }

    fn backward(&self) -> Vec<f64> {
        let t = self.t();
        let mut beta = vec![f64::NEG_INFINITY; self.len * t];
        for tag in 0..t {
            beta[(self.len - 1) * t + tag] = self.end_score(tag);
        }
        for j in (0..self.len - 1).rev() {
            for prev in 0..t {
                let lse = log_sum_exp((0..t).map(|next| {
                    self.trans(prev, next) + self.emit(j + 1, next) + beta[(j + 1) * t + next]
                }));
                beta[j * t + prev] = lse;
            }
        }
        beta
    }

    pub fn log_partition(&self) -> f64 {
        let t = self.t();
        let alpha = self.forward();
        let last = &alpha[(self.len - 1) * t..];
        log_sum_exp((0..t).map(|tag| last[tag] + self.end_score(tag)))
    }

    /// Posterior expectations under the chain distribution.
    pub fn marginals(&self) -> ChainMarginals {
        let t = self.t();
        let alpha = self.forward();
        let beta = self.backward();
        let last = &alpha[(self.len - 1) * t..];
        let log_z = log_sum_exp((0..t).map(|tag| last[tag] + self.end_score(tag)));

        let unary: Vec<f64> = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b - log_z).exp())
            .collect();
        let mut pairwise = vec![0.0; t * t];
        for j in 0..self.len.saturating_sub(1) {
            for prev in 0..t {
                let a = alpha[j * t + prev];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                for next in 0..t {
                    if !self.constraints.is_allowed(prev, next) {
                        continue;
                    }
                    let s = a
                        + self.trans(prev, next)
                        + self.emit(j + 1, next)
                        + beta[(j + 1) * t + next];
                    pairwise[prev * t + next] += (s - log_z).exp();
                }
            }
        }
        let start = (0..t).map(|tag| unary[tag]).collect();
        let end = (0..t).map(|tag| unary[(self.len - 1) * t + tag]).collect();
        ChainMarginals {
            log_partition: log_z,
            unary,
            pairwise,
            start,
            end,
        }
    }

    /// Max-scoring valid path. Ties resolve toward the lowest tag index.
    pub fn viterbi(&self) -> (Vec<usize>, f64) {
        let t = self.t();
        let mut delta = vec![f64::NEG_INFINITY; self.len * t];
        let mut back = vec![0usize; self.len * t];
        for tag in 0..t {
            delta[tag] = self.start_score(tag) + self.emit(0, tag);
        }
        for j in 1..self.len {
            for next in 0..t {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for prev in 0..t {
                    let s = delta[(j - 1) * t + prev] + self.trans(prev, next);
                    if s > best {
                        best = s;
                        arg = prev;
                    }
                }
                delta[j * t + next] = best + self.emit(j, next);
                back[j * t + next] = arg;
            }
        }
        let mut best = f64::NEG_INFINITY;
        let mut last = 0;
        for tag in 0..t {
            let s = delta[(self.len - 1) * t + tag] + self.end_score(tag);
            if s > best {
                best = s;
                last = tag;
            }
        }
        let mut path = vec![last; self.len];
        for j in (1..self.len).rev() {
            path[j - 1] = back[j * t + path[j]];
        }
        (path, best)
    }
}

#[derive(Debug, Clone)]
pub struct ChainMarginals {
    pub log_partition: f64,
    /// `[len][tags]`
    pub unary: Vec<f64>,
    /// Expected transition counts summed over positions, `[prev][next]`.
    pub pairwise: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}
