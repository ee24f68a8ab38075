//! Dense discrete factors for variable elimination.

/// A table over `vars` (row-major, the last variable varies fastest).
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Factor {
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn scalar(v: f64) -> Self {
        Self {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![v],
        }
    }

    pub fn new(vars: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(cards.iter().product::<usize>(), values.len());
        Self { vars, cards, values }
    }

    pub fn contains(&self, var: usize) -> bool {
        self.vars.contains(&var)
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.cards[i + 1];
        }
        s
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (v, c) in other.vars.iter().zip(&other.cards) {
            if !vars.contains(v) {
                vars.push(*v);
                cards.push(*c);
            }
        }
        // stride of each output axis in each operand (0 when absent)
        let sa = self.strides();
        let sb = other.strides();
        let stride_in = |f: &Factor, s: &[usize], v: usize| f.vars.iter().position(|&u| u == v).map_or(0, |p| s[p]);
        let a_str: Vec<usize> = vars.iter().map(|&v| stride_in(self, &sa, v)).collect();
        let b_str: Vec<usize> = vars.iter().map(|&v| stride_in(other, &sb, v)).collect();

        let n: usize = cards.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut idx = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..n {
            values.push(self.values[ia] * other.values[ib]);
            for ax in (0..vars.len()).rev() {
                idx[ax] += 1;
                ia += a_str[ax];
                ib += b_str[ax];
                if idx[ax] < cards[ax] {
                    break;
                }
                ia -= a_str[ax] * cards[ax];
                ib -= b_str[ax] * cards[ax];
                idx[ax] = 0;
            }
        }
        Factor { vars, cards, values }
    }

    pub fn sum_out(&self, var: usize) -> Factor {
        let Some(p) = self.vars.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let outer: usize = self.cards[..p].iter().product();
        let k = self.cards[p];
        let inner: usize = self.cards[p + 1..].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..k {
                let base = (o * k + j) * inner;
                for i in 0..inner {
                    values[o * inner + i] += self.values[base + i];
                }
            }
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(p);
        cards.remove(p);
        Factor { vars, cards, values }
    }

    /// Multiplies every entry whose `var` state is outside `allowed` by zero.
    pub fn mask(&mut self, var: usize, allowed: &[usize]) {
        let Some(p) = self.vars.iter().position(|&v| v == var) else {
            return;
        };
        let k = self.cards[p];
        let inner: usize = self.cards[p + 1..].iter().product();
        for (i, x) in self.values.iter_mut().enumerate() {
            if !allowed.contains(&((i / inner) % k)) {
                *x = 0.0;
            }
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}
