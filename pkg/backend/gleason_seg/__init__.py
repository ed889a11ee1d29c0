"""Gleason-pattern semantic segmentation engine: autograd core, FCN/SegNet/U-Net/ResU-Net, Dice loss, kappa."""

__version__ = "0.1.0"
