use std::collections::VecDeque;

use crate::scalar::Real;

/// Symmetric-pattern sparse matrix in 2×2 blocks, one block row per mesh vertex.
///
/// Global dof `2 v + c` is component `c` of vertex `v`.
#[derive(Clone, Debug)]
pub struct BlockCsr<T> {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<[T; 4]>,
}

impl<T: Real> BlockCsr<T> {
    /// Pattern from vertex cliques (typically the triangles of a mesh).
    pub fn from_cliques(n_vertices: usize, cliques: &[[usize; 3]]) -> Self {
        let mut adj: Vec<Vec<usize>> = (0..n_vertices).map(|v| vec![v]).collect();
        for c in cliques {
            for &a in c {
                for &b in c {
                    adj[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n_vertices + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let values = vec![[T::zero(); 4]; col_idx.len()];
        Self { row_ptr, col_idx, values }
    }

    pub fn n_vertices(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_vertices()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|b| *b = [T::zero(); 4]);
    }

    #[inline]
    fn locate(&self, vi: usize, vj: usize) -> usize {
        let row = &self.col_idx[self.row_ptr[vi]..self.row_ptr[vi + 1]];
        let k = row.binary_search(&vj).expect("entry outside sparsity pattern");
        self.row_ptr[vi] + k
    }

    /// Adds `val` to the scalar entry at global dofs `(p, q)`.
    #[inline]
    pub fn add(&mut self, p: usize, q: usize, val: T) {
        let k = self.locate(p / 2, q / 2);
        self.values[k][2 * (p % 2) + q % 2] += val;
    }

    pub fn get(&self, p: usize, q: usize) -> T {
        let row = &self.col_idx[self.row_ptr[p / 2]..self.row_ptr[p / 2 + 1]];
        match row.binary_search(&(q / 2)) {
            Ok(k) => self.values[self.row_ptr[p / 2] + k][2 * (p % 2) + q % 2],
            Err(_) => T::zero(),
        }
    }

    /// Iterates the nonzero scalar entries of dof row `p` as `(q, value)`.
    pub fn row_entries(&self, p: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let v = p / 2;
        let a = p % 2;
        (self.row_ptr[v]..self.row_ptr[v + 1]).flat_map(move |k| {
            let w = self.col_idx[k];
            let blk = &self.values[k];
            [(2 * w, blk[2 * a]), (2 * w + 1, blk[2 * a + 1])]
        })
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n_dofs());
        let mut y = vec![T::zero(); x.len()];
        for v in 0..self.n_vertices() {
            let mut s0 = T::zero();
            let mut s1 = T::zero();
            for k in self.row_ptr[v]..self.row_ptr[v + 1] {
                let w = self.col_idx[k];
                let b = &self.values[k];
                s0 += b[0] * x[2 * w] + b[1] * x[2 * w + 1];
                s1 += b[2] * x[2 * w] + b[3] * x[2 * w + 1];
            }
            y[2 * v] = s0;
            y[2 * v + 1] = s1;
        }
        y
    }

    /// Vertex adjacency without self loops.
    pub fn vertex_graph(&self) -> Vec<Vec<usize>> {
        (0..self.n_vertices())
            .map(|v| self.neighbors(v).iter().copied().filter(|&w| w != v).collect())
            .collect()
    }
}

/// Reverse Cuthill–McKee ordering; `order[k]` is the k-th vertex to eliminate.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let degree = |v: usize| adj[v].len();
    while order.len() < n {
        let seed = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree(v), v)).unwrap();
        let start = pseudo_peripheral(adj, seed, &visited);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree(w), w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize, blocked: &[bool]) -> usize {
    let bfs = |s: usize| -> (usize, usize) {
        let mut dist = vec![usize::MAX; adj.len()];
        let mut queue = VecDeque::from([s]);
        dist[s] = 0;
        let mut last = s;
        while let Some(v) = queue.pop_front() {
            if dist[v] > dist[last] || (dist[v] == dist[last] && adj[v].len() < adj[last].len()) {
                last = v;
            }
            for &w in &adj[v] {
                if !blocked[w] && dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        (last, dist[last])
    };
    let mut current = seed;
    let (mut far, mut ecc) = bfs(current);
    for _ in 0..8 {
        let (next_far, next_ecc) = bfs(far);
        if next_ecc <= ecc {
            break;
        }
        current = far;
        far = next_far;
        ecc = next_ecc;
    }
    let _ = current;
    far
}
