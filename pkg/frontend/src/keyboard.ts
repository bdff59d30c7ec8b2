// Keyboard path: 1/2/3/4 toggle the four codes, Enter saves, arrows
// navigate. Full coding is possible without the mouse.

import type { CodingStore } from './state'
import { CATEGORIES } from './types'

export type KeyCommand =
  | { kind: 'toggle'; category: (typeof CATEGORIES)[number] }
  | { kind: 'save' }
  | { kind: 'move'; delta: number }

export function commandForKey(key: string): KeyCommand | null {
  switch (key) {
    case '1':
    case '2':
    case '3':
    case '4':
      return { kind: 'toggle', category: CATEGORIES[Number(key) - 1] }
    case 'Enter':
      return { kind: 'save' }
    case 'ArrowRight':
    case 'ArrowDown':
      return { kind: 'move', delta: 1 }
    case 'ArrowLeft':
    case 'ArrowUp':
      return { kind: 'move', delta: -1 }
    default:
      return null
  }
}

const isTypingTarget = (target: EventTarget | null): boolean =>
  target instanceof HTMLElement &&
  (target.tagName === 'INPUT' ||
    target.tagName === 'TEXTAREA' ||
    target.tagName === 'SELECT' ||
    target.isContentEditable)

export function dispatchCommand(store: CodingStore, command: KeyCommand): void {
  switch (command.kind) {
    case 'toggle':
      store.toggle(command.category)
      break
    case 'save':
      void store.save()
      break
    case 'move':
      store.move(command.delta)
      break
  }
}

export function installKeyboard(store: CodingStore, target: Window): () => void {
  const handler = (event: KeyboardEvent) => {
    if (event.ctrlKey || event.metaKey || event.altKey) return
    if (isTypingTarget(event.target)) return
    const command = commandForKey(event.key)
    if (!command) return
    event.preventDefault()
    dispatchCommand(store, command)
  }
  target.addEventListener('keydown', handler)
  return () => target.removeEventListener('keydown', handler)
}
