from skillseg.cli import main

main()
