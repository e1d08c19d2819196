"""
Project version and meta informations.
"""

__version__ = "0.1.0dev"
__title__ = "eegdg"
__description__ = "eegdg - Multi-source domain generalization for motor-imagery EEG"
__author__ = "eegdg contributors"
__author_email__ = ""
__license__ = "The MIT License"
__url__ = ""
__keywords__ = "eeg domain generalization mmd motor imagery autodiff"
