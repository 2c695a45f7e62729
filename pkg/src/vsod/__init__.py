"""Video salient object detection with saliency-guided stacked autoencoders.

The package covers three things: the unsupervised detector (cue extraction,
layerwise autoencoder training, post-processing), the fixation-driven ground
truth construction used to annotate salient objects in video, and the
benchmark harness that scores saliency maps against those annotations.
"""

__version__ = "0.1.0"
