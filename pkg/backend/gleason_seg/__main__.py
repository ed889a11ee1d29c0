from gleason_seg.scripts.cli import main

main()
