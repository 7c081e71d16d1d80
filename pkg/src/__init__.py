# mmforge: synthetic multimodal video datasets from COCO images
