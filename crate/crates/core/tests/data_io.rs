use std::fs;
use std::path::Path;

use cal_core::data::pgm::Pgm;
use cal_core::data::{
    load_dataset, parse_38cloud_stem, scan_38cloud, write_dataset, BitDepth, Dataset,
    DatasetManifest, Sample, Split,
};
use cal_core::raster::{Band, ImagePatch, Mask};
use cal_core::Error;

fn write_pgm(path: &Path, w: usize, h: usize, maxval: u16, f: impl Fn(usize) -> u16) {
    Pgm::new(w, h, maxval, (0..w * h).map(f).collect())
        .unwrap()
        .write(path)
        .unwrap();
}

#[test]
fn stem_parsing() {
    let s = parse_38cloud_stem("nir_patch_192_10_by_12_LC08_L1TP_002053_20160520_20170324_01_T1")
        .unwrap();
    assert_eq!(s.band, Some(Band::Nir));
    assert_eq!((s.index, s.row, s.col), (192, 10, 12));
    assert_eq!(s.scene, "LC08_L1TP_002053_20160520_20170324_01_T1");
    assert_eq!(
        s.patch_id(),
        "patch_192_10_by_12_LC08_L1TP_002053_20160520_20170324_01_T1"
    );
    assert_eq!(
        parse_38cloud_stem("gt_patch_1_1_by_1_S").unwrap().band,
        None
    );
    for bad in [
        "swir_patch_1_1_by_1_S",
        "red_patch_1_1_x_1_S",
        "red_patch_a_1_by_1_S",
        "red_patch_1_1_by_1_",
        "red",
    ] {
        assert!(parse_38cloud_stem(bad).is_none(), "{bad}");
    }
}

#[test]
fn scan_and_load_38cloud_layout() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for band in ["red", "green", "blue", "nir", "gt"] {
        fs::create_dir_all(root.join(format!("train_{band}"))).unwrap();
    }
    let patches = [
        ("patch_2_1_by_1_SCENEB", true),
        ("patch_1_1_by_2_SCENEA", true),
        ("patch_1_1_by_1_SCENEA", false),
    ];
    for (k, (stem, with_gt)) in patches.iter().enumerate() {
        for (b, band) in ["red", "green", "blue", "nir"].iter().enumerate() {
            write_pgm(
                &root.join(format!("train_{band}/{band}_{stem}.pgm")),
                3,
                2,
                65535,
                |i| (i as u16 + b as u16 + k as u16) * 257,
            );
        }
        if *with_gt {
            write_pgm(
                &root.join(format!("train_gt/gt_{stem}.pgm")),
                3,
                2,
                255,
                |i| if i % 2 == 0 { 255 } else { 0 },
            );
        }
    }
    fs::write(root.join("README.txt"), "not a patch").unwrap();

    let manifest = scan_38cloud(root, Split::Train).unwrap();
    assert_eq!(manifest.bit_depth, BitDepth::Sixteen);
    let ids: Vec<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
    assert_eq!(
        ids,
        [
            "patch_1_1_by_1_SCENEA",
            "patch_1_1_by_2_SCENEA",
            "patch_2_1_by_1_SCENEB"
        ]
    );
    assert!(manifest.entries[0].mask.is_none());

    let path = root.join("manifest.toml");
    manifest.write(&path).unwrap();
    assert_eq!(DatasetManifest::read(&path).unwrap(), manifest);
    let ds = load_dataset(&path).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.first_unlabeled(), Some("patch_1_1_by_1_SCENEA"));
    let s = &ds.samples[2];
    // first written patch (k = 0), red band, pixel 1
    assert_eq!(s.patch.get(0, 1, 0), 1.0);
    assert_eq!(s.patch.get(3, 1, 0), 4.0);
    assert_eq!(s.mask.as_ref().unwrap().values(), &[1, 0, 1, 0, 1, 0]);
}

#[test]
fn scan_requires_all_bands() {
    let dir = tempfile::tempdir().unwrap();
    for band in ["red", "green", "blue"] {
        write_pgm(
            &dir.path().join(format!("{band}_patch_1_1_by_1_S.pgm")),
            2,
            2,
            255,
            |_| 7,
        );
    }
    let err = scan_38cloud(dir.path(), Split::Test).unwrap_err();
    assert!(err.to_string().contains("patch_1_1_by_1_S"), "{err}");
}

fn one_sample_dataset() -> Dataset {
    let mut ds = Dataset::new(Split::Test, vec![Band::Red, Band::Nir], BitDepth::Eight);
    ds.samples.push(Sample {
        id: "a".into(),
        patch: ImagePatch::new(
            2,
            2,
            vec![Band::Red, Band::Nir],
            vec![vec![0.0, 1.0, 2.0, 255.0], vec![9.0; 4]],
        )
        .unwrap(),
        mask: Some(Mask::new(2, 2, vec![0, 1, 1, 0]).unwrap()),
    });
    ds
}

#[test]
fn load_errors_name_the_entry() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&one_sample_dataset(), dir.path()).unwrap();
    assert_eq!(load_dataset(&manifest).unwrap(), one_sample_dataset());

    write_pgm(&dir.path().join("a_mask.pgm"), 2, 2, 255, |i| {
        if i == 0 {
            128
        } else {
            0
        }
    });
    let err = load_dataset(&manifest).unwrap_err();
    assert!(
        matches!(&err, Error::Load { entry, .. } if entry == "a"),
        "{err}"
    );

    write_pgm(&dir.path().join("a_mask.pgm"), 3, 2, 255, |_| 0);
    assert!(matches!(load_dataset(&manifest), Err(Error::Load { .. })));

    fs::remove_file(dir.path().join("a_nir.pgm")).unwrap();
    let err = load_dataset(&manifest).unwrap_err();
    assert!(err.to_string().contains("a_nir.pgm"), "{err}");
}

#[test]
fn manifest_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&one_sample_dataset(), dir.path()).unwrap();
    let text = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, format!("surprise = 1\n{text}")).unwrap();
    assert!(load_dataset(&manifest).is_err());
}

#[test]
fn write_rejects_unrepresentable_values() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = one_sample_dataset();
    ds.samples[0].patch = ImagePatch::new(
        2,
        2,
        vec![Band::Red, Band::Nir],
        vec![vec![0.5; 4], vec![1.0; 4]],
    )
    .unwrap();
    assert!(write_dataset(&ds, dir.path()).is_err());
    let mut bad_id = one_sample_dataset();
    bad_id.samples[0].id = "../escape".into();
    assert!(write_dataset(&bad_id, dir.path()).is_err());
}
