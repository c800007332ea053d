
VERSION_STRING  = '0.1.0.0'
MAJOR_VERSION   = 0
MINOR_VERSION   = 1
RELEASE_VERSION = 0
SUBREL_VERSION  = 0

VERSION = (MAJOR_VERSION, MINOR_VERSION, RELEASE_VERSION,
           SUBREL_VERSION, '')
