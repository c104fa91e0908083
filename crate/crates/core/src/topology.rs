//! Sites, files and copy placement.
//!
//! The database of `dbsize` pages is split evenly across sites (primary
//! copies), and each site's pages are cut into `files_per_site` contiguous
//! files. Extra copies of a file go to distinct non-primary sites.

use std::ops::Range;

use crate::engine::RngStream;
use crate::error::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId(pub u32);

impl SiteId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for SiteId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type FileId = usize;
pub type PageId = u32;

#[derive(Clone, Debug)]
pub struct FileInfo {
    pub pages: Range<PageId>,
    pub primary: SiteId,
    /// All sites holding a copy, primary first.
    pub copies: Vec<SiteId>,
}

#[derive(Clone, Debug)]
pub struct FileMap {
    num_sites: u32,
    pages_per_site: Vec<u32>,
    files: Vec<FileInfo>,
    /// Per site, the files it holds a copy of (ascending id).
    resident_files: Vec<Vec<FileId>>,
}

impl FileMap {
    pub fn num_sites(&self) -> u32 {
        self.num_sites
    }

    pub fn num_files(&self) -> usize {
        self.files.len()
    }

    pub fn file(&self, id: FileId) -> Result<&FileInfo, SimError> {
        self.files.get(id).ok_or(SimError::UnknownFile(id))
    }

    pub fn files(&self) -> &[FileInfo] {
        &self.files
    }

    /// Primary pages held by each site.
    pub fn site_pages(&self) -> &[u32] {
        &self.pages_per_site
    }

    pub fn resident_files(&self, site: SiteId) -> &[FileId] {
        &self.resident_files[site.index()]
    }

    /// Number of pages (primary or replica) resident at `site`.
    pub fn resident_page_count(&self, site: SiteId) -> u32 {
        self.resident_files(site).iter().map(|&f| self.files[f].pages.len() as u32).sum()
    }

    /// The `n`-th resident page of `site`, counting through its files in id order.
    pub fn resident_page(&self, site: SiteId, mut n: u32) -> Option<PageId> {
        for &f in self.resident_files(site) {
            let pages = &self.files[f].pages;
            let len = pages.len() as u32;
            if n < len {
                return Some(pages.start + n);
            }
            n -= len;
        }
        None
    }

    pub fn holds(&self, site: SiteId, page: PageId) -> bool {
        self.resident_files(site).iter().any(|&f| self.files[f].pages.contains(&page))
    }
}

pub fn place_files(
    dbsize: u32,
    num_sites: u32,
    files_per_site: u32,
    replication: u32,
    rng: &mut RngStream,
) -> Result<FileMap, SimError> {
    if num_sites == 0 {
        return Err(SimError::config("NumSites", "must be at least 1"));
    }
    if files_per_site == 0 {
        return Err(SimError::config("FilesPerSite", "must be at least 1"));
    }
    if dbsize < num_sites * files_per_site {
        return Err(SimError::config(
            "Dbsize",
            format!("{dbsize} pages cannot fill {num_sites} sites x {files_per_site} files"),
        ));
    }
    let replication = if num_sites == 1 { 1 } else { replication };
    if replication == 0 || replication > num_sites {
        return Err(SimError::config(
            "Replication",
            format!("{replication} copies not in [1, {num_sites}]"),
        ));
    }

    let pages_per_site: Vec<u32> = (0..num_sites).map(|s| share(dbsize, num_sites, s)).collect();
    let mut files = Vec::with_capacity((num_sites * files_per_site) as usize);
    let mut start = 0;
    for (s, &site_pages) in pages_per_site.iter().enumerate() {
        let mut file_start = start;
        for f in 0..files_per_site {
            let len = share(site_pages, files_per_site, f);
            files.push(FileInfo {
                pages: file_start..file_start + len,
                primary: SiteId(s as u32),
                copies: vec![SiteId(s as u32)],
            });
            file_start += len;
        }
        start += site_pages;
    }

    for file in files.iter_mut() {
        if replication > 1 {
            let others: Vec<SiteId> = (0..num_sites).map(SiteId).filter(|&s| s != file.primary).collect();
            let picks = rng.sample_distinct(others.len(), (replication - 1) as usize)?;
            let mut extra: Vec<SiteId> = picks.into_iter().map(|i| others[i]).collect();
            extra.sort();
            file.copies.extend(extra);
        }
    }

    let mut resident_files = vec![Vec::new(); num_sites as usize];
    for (id, file) in files.iter().enumerate() {
        for site in &file.copies {
            resident_files[site.index()].push(id);
        }
    }

    Ok(FileMap {
        num_sites,
        pages_per_site,
        files,
        resident_files,
    })
}

/// Size of part `i` when `total` is split into `parts` near-equal parts.
fn share(total: u32, parts: u32, i: u32) -> u32 {
    total / parts + u32::from(i < total % parts)
}

/// Chooses one execution site per file: the origin if it holds a copy,
/// otherwise a uniform pick among the file's copy sites. The returned list is
/// parallel to `files`.
pub fn select_execution_sites(
    origin: SiteId,
    files: &[FileId],
    map: &FileMap,
    rng: &mut RngStream,
) -> Result<Vec<SiteId>, SimError> {
    files
        .iter()
        .map(|&f| {
            let info = map.file(f)?;
            if info.copies.contains(&origin) {
                Ok(origin)
            } else if info.copies.len() == 1 {
                Ok(info.copies[0])
            } else {
                let i = rng.draw_uniform_int(0, info.copies.len() as u64 - 1)? as usize;
                Ok(info.copies[i])
            }
        })
        .collect()
}

/// Distinct sites of a per-file site list, in first-appearance order.
pub fn cohort_sites(chosen: &[SiteId]) -> Vec<SiteId> {
    let mut out: Vec<SiteId> = Vec::with_capacity(chosen.len());
    for &s in chosen {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{RngStreams, StreamPurpose};
    use proptest::prelude::*;

    fn rng(seed: u64) -> RngStream {
        RngStreams::new(seed).stream(StreamPurpose::FileLayout, 0)
    }

    #[test]
    fn table_two_database_is_300_pages_per_site() {
        let map = place_files(2400, 8, 4, 1, &mut rng(1)).unwrap();
        assert!(map.site_pages().iter().all(|&p| p == 300));
        assert_eq!(map.num_files(), 32);
        assert!(map.files().iter().all(|f| f.pages.len() == 75));
    }

    #[test]
    fn single_site_forces_local_copies() {
        let map = place_files(2400, 1, 4, 3, &mut rng(1)).unwrap();
        assert_eq!(map.site_pages(), &[2400]);
        assert!(map.files().iter().all(|f| f.copies == vec![SiteId(0)]));
    }

    #[test]
    fn replication_two_is_reproducible_and_distinct() {
        let a = place_files(2400, 8, 4, 2, &mut rng(5)).unwrap();
        let b = place_files(2400, 8, 4, 2, &mut rng(5)).unwrap();
        for (fa, fb) in a.files().iter().zip(b.files()) {
            assert_eq!(fa.copies, fb.copies);
            assert_eq!(fa.copies.len(), 2);
            assert_ne!(fa.copies[0], fa.copies[1]);
            assert_eq!(fa.copies[0], fa.primary);
        }
    }

    #[test]
    fn too_many_copies_rejected() {
        assert!(place_files(2400, 8, 4, 9, &mut rng(1)).is_err());
        assert!(place_files(2400, 8, 4, 0, &mut rng(1)).is_err());
    }

    #[test]
    fn local_copy_preferred() {
        let map = place_files(2400, 8, 4, 1, &mut rng(1)).unwrap();
        let local = map.resident_files(SiteId(3))[0];
        let sites = select_execution_sites(SiteId(3), &[local], &map, &mut rng(2)).unwrap();
        assert_eq!(sites, vec![SiteId(3)]);
    }

    #[test]
    fn single_remote_copy_is_forced() {
        let map = place_files(2400, 8, 4, 1, &mut rng(1)).unwrap();
        let remote = map.resident_files(SiteId(5))[1];
        let sites = select_execution_sites(SiteId(0), &[remote], &map, &mut rng(2)).unwrap();
        assert_eq!(sites, vec![SiteId(5)]);
    }

    #[test]
    fn unknown_file_rejected() {
        let map = place_files(2400, 8, 4, 1, &mut rng(1)).unwrap();
        let err = select_execution_sites(SiteId(0), &[999], &map, &mut rng(2)).unwrap_err();
        assert_eq!(err, SimError::UnknownFile(999));
    }

    #[test]
    fn two_remote_copies_chosen_evenly() {
        let mut map = place_files(2400, 8, 4, 1, &mut rng(1)).unwrap();
        map.files[0].copies = vec![SiteId(2), SiteId(7)];
        let mut r = rng(3);
        let trials = 10_000;
        let mut at_two = 0;
        for _ in 0..trials {
            if select_execution_sites(SiteId(0), &[0], &map, &mut r).unwrap()[0] == SiteId(2) {
                at_two += 1;
            }
        }
        let frac = at_two as f64 / trials as f64;
        assert!((frac - 0.5).abs() < 0.03, "{frac}");
    }

    #[test]
    fn cohort_sites_dedup_in_order() {
        let sites = cohort_sites(&[SiteId(4), SiteId(1), SiteId(4), SiteId(0)]);
        assert_eq!(sites, vec![SiteId(4), SiteId(1), SiteId(0)]);
    }

    #[test]
    fn resident_page_walks_files() {
        let map = place_files(20, 2, 2, 1, &mut rng(1)).unwrap();
        assert_eq!(map.resident_page_count(SiteId(1)), 10);
        assert_eq!(map.resident_page(SiteId(1), 0), Some(10));
        assert_eq!(map.resident_page(SiteId(1), 9), Some(19));
        assert_eq!(map.resident_page(SiteId(1), 10), None);
    }

    proptest! {
        #[test]
        fn primary_placement_is_balanced(num_sites in 1u32..16, fps in 1u32..6, extra in 0u32..500) {
            let dbsize = num_sites * fps + extra;
            let map = place_files(dbsize, num_sites, fps, 1, &mut rng(9)).unwrap();
            let max = *map.site_pages().iter().max().unwrap();
            let min = *map.site_pages().iter().min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert_eq!(map.site_pages().iter().sum::<u32>(), dbsize);
            let file_total: u32 = map.files().iter().map(|f| f.pages.len() as u32).sum();
            prop_assert_eq!(file_total, dbsize);
        }

        #[test]
        fn chosen_sites_hold_a_copy(seed in 0u64..1000, origin in 0u32..8, repl in 1u32..4) {
            let map = place_files(2400, 8, 4, repl, &mut rng(seed)).unwrap();
            let files: Vec<FileId> = (0..map.num_files()).collect();
            let mut r = rng(seed + 1);
            let sites = select_execution_sites(SiteId(origin), &files, &map, &mut r).unwrap();
            for (&f, &s) in files.iter().zip(&sites) {
                let copies = &map.file(f).unwrap().copies;
                prop_assert!(copies.contains(&s));
                if copies.contains(&SiteId(origin)) {
                    prop_assert_eq!(s, SiteId(origin));
                }
            }
        }
    }
}
