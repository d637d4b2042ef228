use super::{BBox, ChangeRegion, LocalizerParams};

/// Binary change mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffMask {
    pub height: usize,
    pub width: usize,
    bits: Vec<bool>,
}

impl DiffMask {
    pub fn new(height: usize, width: usize) -> DiffMask {
        DiffMask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> DiffMask {
        assert_eq!(bits.len(), height * width, "mask size mismatch");
        DiffMask { height, width, bits }
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.width + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Tight boxes and areas of the 8-connected components of `mask`.
fn components(mask: &DiffMask) -> Vec<(BBox, usize)> {
    const NONE: u32 = u32::MAX;
    let (h, w) = (mask.height, mask.width);
    let mut labels = vec![NONE; h * w];
    let mut uf = UnionFind { parent: Vec::new() };

    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let mut label = NONE;
            let mut neighbour = |rr: usize, cc: usize, label: &mut u32| {
                let l = labels[rr * w + cc];
                if l != NONE {
                    *label = if *label == NONE { l } else { uf.union(*label, l) };
                }
            };
            if c > 0 {
                neighbour(r, c - 1, &mut label);
            }
            if r > 0 {
                if c > 0 {
                    neighbour(r - 1, c - 1, &mut label);
                }
                neighbour(r - 1, c, &mut label);
                if c + 1 < w {
                    neighbour(r - 1, c + 1, &mut label);
                }
            }
            if label == NONE {
                label = uf.make();
            }
            labels[r * w + c] = label;
        }
    }

    let mut stats: Vec<Option<(BBox, usize)>> = vec![None; uf.parent.len()];
    for r in 0..h {
        for c in 0..w {
            let l = labels[r * w + c];
            if l == NONE {
                continue;
            }
            let root = uf.find(l) as usize;
            let px = BBox::new(r as u32, c as u32, r as u32 + 1, c as u32 + 1);
            stats[root] = Some(match stats[root] {
                None => (px, 1),
                Some((b, n)) => (b.union(&px), n + 1),
            });
        }
    }
    stats.into_iter().flatten().collect()
}

/// Turns a change mask into merged, indexed regions for frame `frame`.
///
/// Components below `min_area_px` are dropped; each survivor's tight box is
/// grown by `expand_px` and clipped; boxes that intersect or touch are
/// merged until none do. Regions are numbered in `(minr, minc)` order.
pub fn extract_regions(mask: &DiffMask, params: &LocalizerParams, frame: usize) -> Vec<ChangeRegion> {
    let (h, w) = (mask.height as u32, mask.width as u32);
    let mut groups: Vec<(BBox, Vec<BBox>)> = components(mask)
        .into_iter()
        .filter(|(_, area)| *area >= params.min_area_px)
        .map(|(tight, _)| (tight.expand_clipped(params.expand_px, h, w), vec![tight]))
        .collect();

    loop {
        let mut merged_any = false;
        let mut i = 0;
        while i < groups.len() {
            let mut j = i + 1;
            while j < groups.len() {
                if groups[i].0.intersects_or_touches(&groups[j].0) {
                    let (bbox, members) = groups.swap_remove(j);
                    groups[i].0 = groups[i].0.union(&bbox);
                    groups[i].1.extend(members);
                    merged_any = true;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !merged_any {
            break;
        }
    }

    groups.sort_by_key(|(bbox, _)| (bbox.minr, bbox.minc, bbox.maxr, bbox.maxc));
    groups
        .into_iter()
        .enumerate()
        .map(|(index, (bbox, mut members))| {
            members.sort();
            ChangeRegion {
                frame,
                index,
                bbox,
                component_bboxes: members,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(mask: &mut DiffMask, r0: usize, c0: usize, r1: usize, c1: usize) {
        for r in r0..r1 {
            for c in c0..c1 {
                mask.set(r, c, true);
            }
        }
    }

    #[test]
    fn empty_mask() {
        assert!(extract_regions(&DiffMask::new(50, 50), &LocalizerParams::default(), 1).is_empty());
    }

    #[test]
    fn single_block_expands_and_clips() {
        let mut m = DiffMask::new(200, 200);
        fill(&mut m, 50, 50, 70, 70);
        let regions = extract_regions(&m, &LocalizerParams::default(), 3);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].bbox, BBox::new(0, 0, 170, 170));
        assert_eq!(regions[0].component_bboxes, vec![BBox::new(50, 50, 70, 70)]);
        assert_eq!(regions[0].id().to_string(), "3_0");
    }

    #[test]
    fn small_blob_is_dropped() {
        let mut m = DiffMask::new(100, 100);
        fill(&mut m, 10, 10, 11, 15);
        assert!(extract_regions(&m, &LocalizerParams::default(), 1).is_empty());
        // ten pixels survive
        fill(&mut m, 11, 10, 12, 15);
        assert_eq!(extract_regions(&m, &LocalizerParams::default(), 1).len(), 1);
    }

    #[test]
    fn diagonal_neighbours_are_one_component() {
        let mut m = DiffMask::new(30, 30);
        for i in 0..10 {
            m.set(i, i, true);
        }
        let comps = components(&m);
        assert_eq!(comps, vec![(BBox::new(0, 0, 10, 10), 10)]);
    }

    #[test]
    fn overlapping_expansions_merge() {
        let mut m = DiffMask::new(600, 600);
        fill(&mut m, 100, 100, 120, 120);
        fill(&mut m, 100, 250, 120, 270);
        let regions = extract_regions(&m, &LocalizerParams::default(), 1);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].bbox, BBox::new(0, 0, 220, 370));
        assert_eq!(regions[0].component_bboxes.len(), 2);
    }

    #[test]
    fn touching_expansions_merge_but_gaps_do_not() {
        // expanded boxes [0,0,220,220] and [0,220,220,440] share an edge
        let mut m = DiffMask::new(600, 800);
        fill(&mut m, 100, 100, 120, 120);
        fill(&mut m, 100, 320, 120, 340);
        assert_eq!(extract_regions(&m, &LocalizerParams::default(), 1).len(), 1);

        let mut m = DiffMask::new(600, 800);
        fill(&mut m, 100, 100, 120, 120);
        fill(&mut m, 100, 321, 120, 341);
        let regions = extract_regions(&m, &LocalizerParams::default(), 1);
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].bbox.minc, 0);
        assert_eq!(regions[1].index, 1);
    }

    #[test]
    fn chained_merges_reach_fixpoint() {
        // A and C are far apart but both overlap the union with B
        let mut m = DiffMask::new(400, 1200);
        fill(&mut m, 10, 10, 20, 20);
        fill(&mut m, 10, 400, 20, 410);
        fill(&mut m, 10, 200, 20, 210);
        let regions = extract_regions(&m, &LocalizerParams::default(), 1);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].component_bboxes.len(), 3);
    }
}
